#include "gptlab/graph/folds.hpp"

#include <algorithm>
#include <numeric>

#include "gptlab/core/errors.hpp"
#include "gptlab/core/random.hpp"

namespace gptlab::graph {

DatasetSplit make_folds(std::size_t count, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ContractError("cross-validation needs at least 2 folds");
  if (count < folds) throw ContractError("fewer samples than folds");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit split;
  split.folds = folds;
  split.seed = seed;
  split.fold_of.assign(count, 0);
  for (std::size_t i = 0; i < count; ++i) split.fold_of[order[i]] = i % folds;
  return split;
}

std::vector<std::size_t> DatasetSplit::eval_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> DatasetSplit::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

}  // namespace gptlab::graph
