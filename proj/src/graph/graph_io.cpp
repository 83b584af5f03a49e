#include "gptlab/graph/graph_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "gptlab/core/errors.hpp"

namespace gptlab::graph {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::size_t parse_size(std::string_view tok, std::size_t line) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw ParseError(line, "expected a non-negative integer, got '" + std::string(tok) + "'");
  }
  return v;
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw ParseError(line, "expected a decimal, got '" + std::string(tok) + "'");
  }
  return v;
}

std::size_t parse_keyed(std::string_view tok, std::string_view key, std::size_t line) {
  if (tok.substr(0, key.size()) != key) {
    throw ParseError(line, "expected '" + std::string(key) + "<int>'");
  }
  return parse_size(tok.substr(key.size()), line);
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Skips blank lines. Returns false at end of input.
  bool next(std::vector<std::string_view>& tokens) {
    while (std::getline(in_, buffer_)) {
      ++line_;
      tokens = split_ws(buffer_);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  void expect(std::vector<std::string_view>& tokens, const char* what) {
    if (!next(tokens)) throw ParseError(line_ + 1, std::string("unexpected end of file, expected ") + what);
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::string buffer_;
  std::size_t line_ = 0;
};

}  // namespace

GraphDataset read_graphs(std::istream& in) {
  LineReader reader(in);
  std::vector<std::string_view> tok;
  reader.expect(tok, "header");
  if (tok.size() != 4 || tok[0] != "GPTGRAPH" || tok[1] != "v1") {
    throw ParseError(reader.line(), "bad header, expected 'GPTGRAPH v1 d=<int> t=<int>'");
  }
  GraphDataset ds;
  ds.feature_width = parse_keyed(tok[2], "d=", reader.line());
  ds.label_width = parse_keyed(tok[3], "t=", reader.line());
  const std::size_t d = ds.feature_width, t = ds.label_width;

  while (reader.next(tok)) {
    if (tok.size() != 3 || tok[0] != "g") throw ParseError(reader.line(), "expected 'g <n> <m>'");
    GraphSample g;
    g.num_nodes = parse_size(tok[1], reader.line());
    const std::size_t m = parse_size(tok[2], reader.line());
    g.features = Tensor({g.num_nodes, d});
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      reader.expect(tok, "feature row");
      if (tok.size() != d) {
        throw ParseError(reader.line(), "feature row has " + std::to_string(tok.size()) +
                                            " values, expected " + std::to_string(d));
      }
      for (std::size_t j = 0; j < d; ++j) g.features.at(i, j) = parse_double(tok[j], reader.line());
    }
    for (std::size_t e = 0; e < m; ++e) {
      reader.expect(tok, "edge");
      if (tok.size() != 3 || tok[0] != "e") throw ParseError(reader.line(), "expected 'e <i> <j>'");
      const Edge edge{parse_size(tok[1], reader.line()), parse_size(tok[2], reader.line())};
      if (edge.u >= g.num_nodes || edge.v >= g.num_nodes) {
        throw ValidationError("line " + std::to_string(reader.line()) + ": edge " +
                              std::to_string(edge.u) + " " + std::to_string(edge.v) +
                              " out of range for " + std::to_string(g.num_nodes) + " nodes");
      }
      g.edges.push_back(edge);
    }
    reader.expect(tok, "label line");
    if (tok[0] != "y" || tok.size() != t + 1) {
      throw ParseError(reader.line(), "expected 'y' followed by " + std::to_string(t) + " values");
    }
    for (std::size_t j = 0; j < t; ++j) g.label.push_back(parse_double(tok[j + 1], reader.line()));
    try {
      g.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(reader.line()) + ": " + e.what());
    }
    ds.samples.push_back(std::move(g));
  }
  return ds;
}

void write_graphs(std::ostream& out, const GraphDataset& ds) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "GPTGRAPH v1 d={} t={}\n", ds.feature_width,
                 ds.label_width);
  for (const GraphSample& g : ds.samples) {
    if (g.prompt_nodes != 0) throw ContractError("write_graphs: prompt nodes are not serializable");
    if (g.feature_width() != ds.feature_width || g.label.size() != ds.label_width) {
      throw ContractError("write_graphs: sample widths differ from the dataset header");
    }
    fmt::format_to(std::back_inserter(buf), "g {} {}\n", g.num_nodes, g.edges.size());
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      for (std::size_t j = 0; j < ds.feature_width; ++j) {
        if (j) buf.push_back(' ');
        fmt::format_to(std::back_inserter(buf), "{:.17g}", g.features.at(i, j));
      }
      buf.push_back('\n');
    }
    for (const Edge& e : g.edges) fmt::format_to(std::back_inserter(buf), "e {} {}\n", e.u, e.v);
    buf.push_back('y');
    for (double y : g.label) fmt::format_to(std::back_inserter(buf), " {:.17g}", y);
    buf.push_back('\n');
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

GraphDataset read_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open graph file " + path.string());
  return read_graphs(in);
}

void write_graph_file(const std::filesystem::path& path, const GraphDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write graph file " + path.string());
  write_graphs(out, dataset);
}

GraphDataset make_dataset(std::vector<GraphSample> samples) {
  GraphDataset ds;
  if (!samples.empty()) {
    ds.feature_width = samples.front().feature_width();
    ds.label_width = samples.front().label.size();
  }
  ds.samples = std::move(samples);
  return ds;
}

}  // namespace gptlab::graph
