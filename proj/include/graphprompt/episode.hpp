#pragma once

#include "graphprompt/graph.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gprompt {

// One graph-level training or evaluation instance.
struct Example {
  Graph graph;
  int label = -1;              // class index (classification, link: 1 = positive pair)
  std::vector<double> target;  // regression targets
  int group = -1;              // ranking group for link evaluation
  std::string target_id;       // provenance of the reformulated target, e.g. "n17" or "e3-9"
  int source_index = -1;       // position in the task dataset the example was drawn from
};

// Few-shot support/query split for one task.
struct TaskEpisode {
  TaskKind level = TaskKind::graph;
  std::vector<Example> support;
  std::vector<Example> query;
  int class_count = 0;  // classes, regression arity, or 1 for link scoring
  std::string dataset_name;
  std::uint64_t seed = 0;
};

}  // namespace gprompt
