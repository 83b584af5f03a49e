#include "gptlab/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gptlab/core/errors.hpp"
#include "gptlab/kernels/kernels.hpp"

namespace gptlab::ops {
namespace {

constexpr double kMaskedScore = -1e30;

const kernels::KernelTable& K() { return kernels::active(); }

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_string(a.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

void require_row_vector(const Var& x, const Var& v, const char* op) {
  require_matrix(x, op);
  if (v.value().rank() != 1 || v.value().numel() != x.value().cols()) {
    throw ShapeError(std::string(op) + ": row vector " + shape_string(v.shape()) +
                     " does not match " + shape_string(x.shape()));
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("use of an unbound Var");
  return *a.tape();
}

void accumulate(Tensor* into, const Tensor& g) {
  if (into != nullptr) K().add(g.numel(), into->raw(), g.raw(), into->raw());
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_string(av.shape()) +
                     " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  K().gemm_nn(m, n, k, av.raw(), bv.raw(), out.raw(), false);
  const Var inputs[] = {a, b};
  return tape_of(a).record(std::move(out), inputs, [m, n, k](const BackwardContext& c) {
    const Tensor& g = c.grad_output;
    if (Tensor* ga = c.input_grads[0]) {
      K().gemm_nt(m, k, n, g.raw(), c.inputs[1]->raw(), ga->raw(), true);
    }
    if (Tensor* gb = c.input_grads[1]) {
      K().gemm_tn(k, n, m, c.inputs[0]->raw(), g.raw(), gb->raw(), true);
    }
  });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), cc = av.cols();
  Tensor out({cc, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cc; ++j) out[j * r + i] = av[i * cc + j];
  const Var inputs[] = {a};
  return tape_of(a).record(std::move(out), inputs, [r, cc](const BackwardContext& c) {
    Tensor* ga = c.input_grads[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < cc; ++j) (*ga)[i * cc + j] += c.grad_output[j * r + i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const Var inputs[] = {a};
  return tape_of(a).record(std::move(out), inputs, [](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  K().add(out.numel(), a.value().raw(), b.value().raw(), out.raw());
  const Var inputs[] = {a, b};
  return tape_of(a).record(std::move(out), inputs, [](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output);
    accumulate(c.input_grads[1], c.grad_output);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = a.value()[i] - b.value()[i];
  const Var inputs[] = {a, b};
  return tape_of(a).record(std::move(out), inputs, [](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output);
    if (Tensor* gb = c.input_grads[1]) {
      K().axpy(gb->numel(), -1.0, c.grad_output.raw(), gb->raw());
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  K().mul(out.numel(), a.value().raw(), b.value().raw(), out.raw());
  const Var inputs[] = {a, b};
  return tape_of(a).record(std::move(out), inputs, [](const BackwardContext& c) {
    const std::size_t n = c.grad_output.numel();
    for (int side = 0; side < 2; ++side) {
      Tensor* g = c.input_grads[side];
      if (g == nullptr) continue;
      const Tensor& other = *c.inputs[1 - side];
      for (std::size_t i = 0; i < n; ++i) (*g)[i] += c.grad_output[i] * other[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  K().scale(out.numel(), factor, a.value().raw(), out.raw());
  const Var inputs[] = {a};
  return tape_of(a).record(std::move(out), inputs, [factor](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    K().axpy(g->numel(), factor, c.grad_output.raw(), g->raw());
  });
}

Var add_row(const Var& x, const Var& v) {
  require_row_vector(x, v, "add_row");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cc = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) K().add(cc, xv.raw() + i * cc, v.value().raw(), out.raw() + i * cc);
  const Var inputs[] = {x, v};
  return tape_of(x).record(std::move(out), inputs, [r, cc](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output);
    if (Tensor* gv = c.input_grads[1]) {
      for (std::size_t i = 0; i < r; ++i)
        K().add(cc, gv->raw(), c.grad_output.raw() + i * cc, gv->raw());
    }
  });
}

Var add_row_masked(const Var& x, const Var& v, std::span<const std::uint8_t> row_mask) {
  require_row_vector(x, v, "add_row_masked");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), cc = xv.cols();
  if (row_mask.size() != r) {
    throw ShapeError("add_row_masked: mask has " + std::to_string(row_mask.size()) +
                     " entries for " + std::to_string(r) + " rows");
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < r; ++i) {
    if (row_mask[i]) K().add(cc, xv.raw() + i * cc, v.value().raw(), out.raw() + i * cc);
  }
  Mask mask(row_mask.begin(), row_mask.end());
  const Var inputs[] = {x, v};
  return tape_of(x).record(std::move(out), inputs,
                           [r, cc, mask = std::move(mask)](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output);
    if (Tensor* gv = c.input_grads[1]) {
      for (std::size_t i = 0; i < r; ++i) {
        if (mask[i]) K().add(cc, gv->raw(), c.grad_output.raw() + i * cc, gv->raw());
      }
    }
  });
}

Var gelu(const Var& a) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  const Var inputs[] = {a};
  return tape_of(a).record(std::move(out), inputs, [](const BackwardContext& c) {
    const Tensor& x = *c.inputs[0];
    Tensor* g = c.input_grads[0];
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
      (*g)[i] += c.grad_output[i] * (cdf + x[i] * pdf);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cc = parts.front().value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.value().cols() != cc) {
      throw ShapeError("concat_rows: column mismatch " + shape_string(parts.front().shape()) +
                       " vs " + shape_string(p.shape()));
    }
    total += p.value().rows();
  }
  Tensor out({total, cc});
  std::vector<std::size_t> offsets;
  std::size_t row = 0;
  for (const Var& p : parts) {
    offsets.push_back(row);
    std::copy(p.value().data().begin(), p.value().data().end(), out.raw() + row * cc);
    row += p.value().rows();
  }
  return tape_of(parts.front()).record(std::move(out), parts,
                                       [offsets, cc](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      if (Tensor* g = c.input_grads[i]) {
        K().add(g->numel(), g->raw(), c.grad_output.raw() + offsets[i] * cc, g->raw());
      }
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_rows");
  const Tensor& av = a.value();
  if (begin + count > av.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     shape_string(av.shape()));
  }
  const std::size_t cc = av.cols();
  Tensor out({count, cc});
  std::copy(av.raw() + begin * cc, av.raw() + (begin + count) * cc, out.raw());
  const Var inputs[] = {a};
  return tape_of(a).record(std::move(out), inputs, [begin, cc](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    K().add(c.grad_output.numel(), g->raw() + begin * cc, c.grad_output.raw(),
            g->raw() + begin * cc);
  });
}

Var softmax_masked(const Var& scores, std::span<const std::uint8_t> mask) {
  require_matrix(scores, "softmax_masked");
  const Tensor& s = scores.value();
  if (mask.size() != s.numel()) throw ShapeError("softmax_masked: mask size mismatch");
  const std::size_t r = s.rows(), cc = s.cols();
  Tensor out(s.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = s.raw() + i * cc;
    const std::uint8_t* m = mask.data() + i * cc;
    double* o = out.raw() + i * cc;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cc; ++j) {
      o[j] = in[j] + (m[j] ? 0.0 : kMaskedScore);
      any = any || m[j];
      mx = std::max(mx, o[j]);
    }
    if (!any) {
      throw ContractError("softmax_masked: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cc; ++j) {
      o[j] = std::exp(o[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < cc; ++j) o[j] = m[j] ? o[j] / total : 0.0;
  }
  const Var inputs[] = {scores};
  return tape_of(scores).record(std::move(out), inputs, [r, cc](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = c.output.raw() + i * cc;
      const double* dy = c.grad_output.raw() + i * cc;
      const double inner = K().dot(cc, y, dy);
      for (std::size_t j = 0; j < cc; ++j) (*g)[i * cc + j] += y[j] * (dy[j] - inner);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_row_vector(x, gain, "layer_norm");
  require_row_vector(x, bias, "layer_norm");
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), d = xv.cols();
  if (d == 0) throw ShapeError("layer_norm: zero-width rows");
  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  Tensor out(xv.shape());
  const double* gv = gain.value().raw();
  const double* bv = bias.value().raw();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.raw() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      (*normalized)[i * d + j] = xh;
      out[i * d + j] = xh * gv[j] + bv[j];
    }
  }
  const Var inputs[] = {x, gain, bias};
  return tape_of(x).record(std::move(out), inputs,
                           [r, d, normalized, inv_std](const BackwardContext& c) {
    const Tensor& gy = c.grad_output;
    const Tensor& gv = *c.inputs[1];
    if (Tensor* gg = c.input_grads[1]) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d; ++j) (*gg)[j] += gy[i * d + j] * (*normalized)[i * d + j];
    }
    if (Tensor* gb = c.input_grads[2]) {
      for (std::size_t i = 0; i < r; ++i) K().add(d, gb->raw(), gy.raw() + i * d, gb->raw());
    }
    if (Tensor* gx = c.input_grads[0]) {
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t i = 0; i < r; ++i) {
        double mean_g = 0.0, mean_gx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double gh = gy[i * d + j] * gv[j];
          mean_g += gh;
          mean_gx += gh * (*normalized)[i * d + j];
        }
        mean_g *= inv_d;
        mean_gx *= inv_d;
        for (std::size_t j = 0; j < d; ++j) {
          const double gh = gy[i * d + j] * gv[j];
          (*gx)[i * d + j] +=
              (*inv_std)[i] * (gh - mean_g - (*normalized)[i * d + j] * mean_gx);
        }
      }
    }
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Var inputs[] = {a};
  return tape_of(a).record(Tensor::scalar(total), inputs, [](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    const double s = c.grad_output.item();
    for (double& v : g->data()) v += s;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var masked_mean_rows(const Var& x, std::span<const std::uint8_t> row_mask) {
  require_matrix(x, "masked_mean_rows");
  const std::size_t r = x.value().rows();
  if (row_mask.size() != r) throw ShapeError("masked_mean_rows: mask size mismatch");
  IndexGroups groups(1);
  for (std::size_t i = 0; i < r; ++i)
    if (row_mask[i]) groups[0].push_back(i);
  return reshape(pool_rows(x, groups, Pool::kMean), {x.value().cols()});
}

Var pool_rows(const Var& x, const IndexGroups& groups, Pool mode) {
  require_matrix(x, "pool_rows");
  const Tensor& xv = x.value();
  const std::size_t cc = xv.cols();
  Tensor out({groups.size(), cc});
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) {
      throw ContractError("pool_rows: group " + std::to_string(g) + " selects no rows");
    }
    double* o = out.raw() + g * cc;
    for (std::size_t row : groups[g]) {
      if (row >= xv.rows()) throw ShapeError("pool_rows: row index out of range");
      K().add(cc, o, xv.raw() + row * cc, o);
    }
    if (mode == Pool::kMean) K().scale(cc, 1.0 / static_cast<double>(groups[g].size()), o, o);
  }
  const Var inputs[] = {x};
  return tape_of(x).record(std::move(out), inputs, [groups, mode, cc](const BackwardContext& c) {
    Tensor* gx = c.input_grads[0];
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double w = mode == Pool::kMean ? 1.0 / static_cast<double>(groups[g].size()) : 1.0;
      for (std::size_t row : groups[g]) {
        K().axpy(cc, w, c.grad_output.raw() + g * cc, gx->raw() + row * cc);
      }
    }
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  require_matrix(table, "gather_rows");
  const Tensor& tv = table.value();
  const std::size_t cc = tv.cols();
  Tensor out({indices.size(), cc});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= tv.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(tv.raw() + indices[i] * cc, cc, out.raw() + i * cc);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var inputs[] = {table};
  return tape_of(table).record(std::move(out), inputs,
                               [idx = std::move(idx), cc](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    for (std::size_t i = 0; i < idx.size(); ++i) {
      K().add(cc, g->raw() + idx[i] * cc, c.grad_output.raw() + i * cc, g->raw() + idx[i] * cc);
    }
  });
}

Var scatter_rows(const Var& base, const Var& src, std::span<const RowCopy> copies) {
  require_matrix(base, "scatter_rows");
  require_matrix(src, "scatter_rows");
  const Tensor& bv = base.value();
  const Tensor& sv = src.value();
  const std::size_t cc = bv.cols();
  if (sv.cols() != cc) {
    throw ShapeError("scatter_rows: width mismatch " + shape_string(bv.shape()) + " vs " +
                     shape_string(sv.shape()));
  }
  std::vector<std::uint8_t> written(bv.rows(), 0);
  Tensor out = bv;
  for (const RowCopy& rc : copies) {
    if (rc.dst >= bv.rows() || rc.src >= sv.rows()) {
      throw ShapeError("scatter_rows: row index out of range");
    }
    if (written[rc.dst]) throw ContractError("scatter_rows: duplicate destination row");
    written[rc.dst] = 1;
    std::copy_n(sv.raw() + rc.src * cc, cc, out.raw() + rc.dst * cc);
  }
  std::vector<RowCopy> saved(copies.begin(), copies.end());
  const Var inputs[] = {base, src};
  return tape_of(base).record(
      std::move(out), inputs,
      [saved = std::move(saved), written = std::move(written), cc](const BackwardContext& c) {
        const Tensor& g = c.grad_output;
        if (Tensor* gb = c.input_grads[0]) {
          for (std::size_t row = 0; row < written.size(); ++row) {
            if (!written[row]) K().add(cc, gb->raw() + row * cc, g.raw() + row * cc, gb->raw() + row * cc);
          }
        }
        if (Tensor* gs = c.input_grads[1]) {
          for (const RowCopy& rc : saved) {
            K().add(cc, gs->raw() + rc.src * cc, g.raw() + rc.dst * cc, gs->raw() + rc.src * cc);
          }
        }
      });
}

Var neighbor_aggregate(const Var& x, const IndexGroups& neighborhoods, Aggregation mode) {
  require_matrix(x, "neighbor_aggregate");
  const Tensor& xv = x.value();
  const std::size_t cc = xv.cols();
  const std::size_t r = neighborhoods.size();
  Tensor out({r, cc});
  // For max: source row chosen per output element.
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (mode == Aggregation::kMax) argmax->assign(r * cc, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const auto& nb = neighborhoods[i];
    double* o = out.raw() + i * cc;
    for (std::size_t j : nb) {
      if (j >= xv.rows()) throw ShapeError("neighbor_aggregate: neighbor index out of range");
    }
    if (nb.empty()) continue;
    if (mode == Aggregation::kMax) {
      for (std::size_t col = 0; col < cc; ++col) {
        std::size_t best = nb.front();
        for (std::size_t j : nb)
          if (xv[j * cc + col] > xv[best * cc + col]) best = j;
        o[col] = xv[best * cc + col];
        (*argmax)[i * cc + col] = best;
      }
      continue;
    }
    for (std::size_t j : nb) K().add(cc, o, xv.raw() + j * cc, o);
    if (mode == Aggregation::kMean) K().scale(cc, 1.0 / static_cast<double>(nb.size()), o, o);
  }
  const Var inputs[] = {x};
  return tape_of(x).record(std::move(out), inputs,
                           [neighborhoods, mode, cc, argmax](const BackwardContext& c) {
    Tensor* gx = c.input_grads[0];
    const Tensor& g = c.grad_output;
    for (std::size_t i = 0; i < neighborhoods.size(); ++i) {
      const auto& nb = neighborhoods[i];
      if (nb.empty()) continue;
      if (mode == Aggregation::kMax) {
        for (std::size_t col = 0; col < cc; ++col)
          (*gx)[(*argmax)[i * cc + col] * cc + col] += g[i * cc + col];
        continue;
      }
      const double w = mode == Aggregation::kMean ? 1.0 / static_cast<double>(nb.size()) : 1.0;
      for (std::size_t j : nb) K().axpy(cc, w, g.raw() + i * cc, gx->raw() + j * cc);
    }
  });
}

void AttentionLayout::validate() const {
  if (lengths.size() != batch) throw ShapeError("attention layout: lengths size != batch");
  if (mask.size() != batch * seq_len * seq_len) throw ShapeError("attention layout: mask size");
  for (std::size_t b = 0; b < batch; ++b) {
    if (lengths[b] > seq_len) throw ShapeError("attention layout: length exceeds seq_len");
    const std::uint8_t* m = mask.data() + b * seq_len * seq_len;
    for (std::size_t i = 0; i < seq_len; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < seq_len; ++j) {
        const bool on = m[i * seq_len + j] != 0;
        if (on && (i >= lengths[b] || j >= lengths[b])) {
          throw ContractError("attention layout: mask admits a padding position");
        }
        any = any || on;
      }
      if (i < lengths[b] && !any) {
        throw ContractError("attention layout: query row " + std::to_string(i) +
                            " of sample " + std::to_string(b) + " has no admissible key");
      }
    }
  }
}

Var attention(const Var& q, const Var& k, const Var& v,
              std::shared_ptr<const AttentionLayout> layout, double scale) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t rows = layout->batch * layout->seq_len;
  if (qv.rows() != rows || kv.rows() != rows || vv.rows() != rows || qv.cols() != kv.cols()) {
    throw ShapeError("attention: operands " + shape_string(qv.shape()) + ", " +
                     shape_string(kv.shape()) + ", " + shape_string(vv.shape()) +
                     " do not fit layout of " + std::to_string(rows) + " rows");
  }
  const std::size_t dk = qv.cols(), dv = vv.cols(), L = layout->seq_len;
  Tensor out({rows, dv});
  auto probs = std::make_shared<std::vector<std::vector<double>>>(layout->batch);
  std::vector<double> scores;
  for (std::size_t b = 0; b < layout->batch; ++b) {
    const std::size_t n = layout->lengths[b];
    if (n == 0) continue;
    const std::size_t base = b * L;
    scores.assign(n * n, 0.0);
    K().gemm_nt(n, n, dk, qv.raw() + base * dk, kv.raw() + base * dk, scores.data(), false);
    const std::uint8_t* m = layout->mask.data() + b * L * L;
    for (std::size_t i = 0; i < n; ++i) {
      double* srow = scores.data() + i * n;
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        const bool on = m[i * L + j] != 0;
        srow[j] = srow[j] * scale + (on ? 0.0 : kMaskedScore);
        any = any || on;
        mx = std::max(mx, srow[j]);
      }
      if (!any) {
        throw ContractError("attention: query row " + std::to_string(i) + " of sample " +
                            std::to_string(b) + " is fully masked");
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        srow[j] = std::exp(srow[j] - mx);
        total += srow[j];
      }
      for (std::size_t j = 0; j < n; ++j) srow[j] = m[i * L + j] ? srow[j] / total : 0.0;
    }
    K().gemm_nn(n, dv, n, scores.data(), vv.raw() + base * dv, out.raw() + base * dv, false);
    (*probs)[b] = scores;
  }
  const Var inputs[] = {q, k, v};
  return tape_of(q).record(std::move(out), inputs,
                           [layout, probs, scale, dk, dv, L](const BackwardContext& c) {
    const Tensor& g = c.grad_output;
    const Tensor& qv = *c.inputs[0];
    const Tensor& kv = *c.inputs[1];
    const Tensor& vv = *c.inputs[2];
    Tensor* gq = c.input_grads[0];
    Tensor* gk = c.input_grads[1];
    Tensor* gv = c.input_grads[2];
    std::vector<double> d_probs, d_scores;
    for (std::size_t b = 0; b < layout->batch; ++b) {
      const std::size_t n = layout->lengths[b];
      if (n == 0) continue;
      const std::size_t base = b * L;
      const std::vector<double>& a = (*probs)[b];
      const double* g_out = g.raw() + base * dv;
      if (gv != nullptr) K().gemm_tn(n, dv, n, a.data(), g_out, gv->raw() + base * dv, true);
      if (gq == nullptr && gk == nullptr) continue;
      d_probs.assign(n * n, 0.0);
      K().gemm_nt(n, n, dv, g_out, vv.raw() + base * dv, d_probs.data(), false);
      d_scores.assign(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double inner = K().dot(n, a.data() + i * n, d_probs.data() + i * n);
        for (std::size_t j = 0; j < n; ++j) {
          d_scores[i * n + j] = a[i * n + j] * (d_probs[i * n + j] - inner) * scale;
        }
      }
      if (gq != nullptr) {
        K().gemm_nn(n, dk, n, d_scores.data(), kv.raw() + base * dk, gq->raw() + base * dk, true);
      }
      if (gk != nullptr) {
        K().gemm_tn(n, dk, n, d_scores.data(), qv.raw() + base * dk, gk->raw() + base * dk, true);
      }
    }
  });
}

Var bce_with_logits(const Var& logits, const Tensor& labels,
                    std::span<const std::uint8_t> label_mask) {
  const Tensor& x = logits.value();
  if (x.shape() != labels.shape() || label_mask.size() != x.numel()) {
    throw ShapeError("bce_with_logits: logits " + shape_string(x.shape()) + " vs labels " +
                     shape_string(labels.shape()));
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!label_mask[i]) continue;
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw ContractError("bce_with_logits: label is not 0 or 1");
    total += std::max(x[i], 0.0) - x[i] * y + std::log1p(std::exp(-std::abs(x[i])));
    ++count;
  }
  if (count == 0) throw ContractError("bce_with_logits: every label is masked");
  const double inv = 1.0 / static_cast<double>(count);
  Mask mask(label_mask.begin(), label_mask.end());
  const Var inputs[] = {logits};
  return tape_of(logits).record(
      Tensor::scalar(total * inv), inputs,
      [labels, mask = std::move(mask), inv](const BackwardContext& c) {
        const Tensor& x = *c.inputs[0];
        Tensor* g = c.input_grads[0];
        const double s = c.grad_output.item() * inv;
        for (std::size_t i = 0; i < x.numel(); ++i) {
          if (!mask[i]) continue;
          const double sig = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                         : std::exp(x[i]) / (1.0 + std::exp(x[i]));
          (*g)[i] += s * (sig - labels[i]);
        }
      });
}

Var mse(const Var& predictions, const Tensor& targets) {
  const Tensor& p = predictions.value();
  if (p.shape() != targets.shape()) {
    throw ShapeError("mse: predictions " + shape_string(p.shape()) + " vs targets " +
                     shape_string(targets.shape()));
  }
  if (p.numel() == 0) throw ContractError("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) total += (p[i] - targets[i]) * (p[i] - targets[i]);
  const double inv = 1.0 / static_cast<double>(p.numel());
  const Var inputs[] = {predictions};
  return tape_of(predictions).record(Tensor::scalar(total * inv), inputs,
                                     [targets, inv](const BackwardContext& c) {
    const Tensor& p = *c.inputs[0];
    Tensor* g = c.input_grads[0];
    const double s = 2.0 * c.grad_output.item() * inv;
    for (std::size_t i = 0; i < p.numel(); ++i) (*g)[i] += s * (p[i] - targets[i]);
  });
}

}  // namespace gptlab::ops
