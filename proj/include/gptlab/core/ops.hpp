#pragma once

// Recorded primitives. Every function appends one node to the tape its
// operands live on. Shapes are checked eagerly; the only broadcast supported
// is a row vector over the rows of a matrix.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "gptlab/core/tape.hpp"

namespace gptlab::ops {

using Mask = std::vector<std::uint8_t>;
using IndexGroups = std::vector<std::vector<std::size_t>>;

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// x[r x c] + v[c] on every row.
Var add_row(const Var& x, const Var& v);
// x[r x c] + v[c] on rows whose mask entry is non-zero; other rows pass through.
Var add_row_masked(const Var& x, const Var& v, std::span<const std::uint8_t> row_mask);

Var gelu(const Var& a);

Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);

// Row softmax over entries whose mask is non-zero. Masked outputs are exactly
// zero. A row with no surviving entry is a ContractError.
Var softmax_masked(const Var& scores, std::span<const std::uint8_t> mask);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);

Var sum(const Var& a);
Var mean(const Var& a);
// Mean over the rows of x[r x c] selected by row_mask -> [c].
Var masked_mean_rows(const Var& x, std::span<const std::uint8_t> row_mask);

enum class Pool { kSum, kMean };
// Output row g pools the rows listed in groups[g]; empty groups are rejected.
Var pool_rows(const Var& x, const IndexGroups& groups, Pool mode);

// Embedding lookup: row i of the result is table[indices[i]].
Var gather_rows(const Var& table, std::span<const std::size_t> indices);

struct RowCopy {
  std::size_t dst;
  std::size_t src;
};
// Result equals base except that row c.dst is replaced by src row c.src for
// every entry. Destinations must be distinct.
Var scatter_rows(const Var& base, const Var& src, std::span<const RowCopy> copies);

enum class Aggregation { kSum, kMean, kMax };
// Output row i aggregates the rows listed in neighborhoods[i]; an empty list
// yields a zero row. Max routes the gradient to the first maximal entry.
Var neighbor_aggregate(const Var& x, const IndexGroups& neighborhoods, Aggregation mode);

// Rows are laid out as batch blocks of seq_len rows. In block b only the
// first lengths[b] rows take part; mask is batch x seq_len x seq_len and
// mask[b][i][j] lets query i attend to key j.
struct AttentionLayout {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> lengths;
  Mask mask;

  void validate() const;
};

// softmax(Q K^T * scale) V per block; rows outside lengths[b] are zero.
Var attention(const Var& q, const Var& k, const Var& v,
              std::shared_ptr<const AttentionLayout> layout, double scale);

// Mean binary cross-entropy with logits over entries where label_mask != 0.
Var bce_with_logits(const Var& logits, const Tensor& labels,
                    std::span<const std::uint8_t> label_mask);
Var mse(const Var& predictions, const Tensor& targets);

}  // namespace gptlab::ops
