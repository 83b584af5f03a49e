#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace gptlab::graph {

// K-fold assignment: seeded shuffle, then round-robin. Fold sizes differ by
// at most one.
struct DatasetSplit {
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;  // sample -> fold

  std::vector<std::size_t> eval_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
};

DatasetSplit make_folds(std::size_t count, std::size_t folds, std::uint64_t seed);

}  // namespace gptlab::graph
