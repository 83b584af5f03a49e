#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gptlab/graph/graph.hpp"

namespace gptlab::graph {

struct GeneratorOptions {
  std::size_t min_nodes = 8;
  std::size_t max_nodes = 16;
  std::size_t feature_width = 4;
};

// Random graphs labelled with triangle count / node count.
std::vector<GraphSample> gen_pretext(std::size_t count, const GeneratorOptions& options,
                                     std::uint64_t seed);

enum class Task { kMotifPresence, kCommunityCount, kMultiMotif };
enum class TaskKind { kClassification, kRegression };

Task parse_task(std::string_view name);
std::string task_name(Task task);
TaskKind task_kind(Task task);
std::size_t task_label_width(Task task);

// motif_presence: 1 iff the graph contains a 4-cycle; classes alternate.
// community_count: number of disjoint dense communities (1..4).
// multi_motif: [has 3-cycle, has 4-cycle, has 5-cycle]; the 8 label patterns
// are produced round-robin so every task is balanced.
std::vector<GraphSample> gen_downstream(std::size_t count, Task task,
                                        const GeneratorOptions& options, std::uint64_t seed);

}  // namespace gptlab::graph
