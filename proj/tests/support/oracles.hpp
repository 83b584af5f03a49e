#pragma once

#include <cstddef>
#include <vector>

namespace gptlab::testing {

// Fraction of (positive, negative) pairs ranked correctly, ties count half.
inline double brute_auroc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

// Precision at the rank of each positive, ties broken by input order.
inline double brute_ap(const std::vector<double>& s, const std::vector<double>& y) {
  const std::size_t n = s.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++rank[i];
  }
  double total = 0, positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 1) continue;
    positives += 1;
    double hits = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (y[j] == 1 && rank[j] <= rank[i]) hits += 1;
    total += hits / static_cast<double>(rank[i]);
  }
  return total / positives;
}

}  // namespace gptlab::testing
