#pragma once

// Recasting node- and edge-level problems as graph-level ones, few-shot episodes and
// link-prediction splits.

#include "graphprompt/episode.hpp"
#include "graphprompt/graph.hpp"
#include "graphprompt/rng.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace gprompt {

// One induced graph per labeled target. Node level: every node with a label >= 0;
// edge level: every edge carrying an edge label. The graph class is the target's label
// and instance_ids record the target ("n5", "e2-7", prefixed "g3/" for multi-graph
// corpora). Graph level on a node-labelled dataset gives one induced graph per labelled
// node, classed by the majority node label inside it (ties to the smallest label).
// Graph-level and regression datasets are returned unchanged.
// Throws ValidationError when the dataset has no labels at `level`.
Dataset reformulate_task(const Dataset& dataset, TaskKind level, int hops = kDefaultHops,
                         int max_nodes = kDefaultMaxNodes);

// Every graph of a graph-level (or reformulated) dataset as an example.
std::vector<Example> to_examples(const Dataset& task_dataset);

// Class-balanced episode: per class, `shots` support and `query` query instances drawn
// uniformly without replacement, classes in index order. Throws ValidationError naming
// the first class with fewer than shots + query instances.
TaskEpisode sample_few_shot(const Dataset& task_dataset, int shots_per_class, int query_per_class, Rng& rng);

// Random disjoint support/query split for regression datasets.
TaskEpisode sample_regression(const Dataset& task_dataset, int support, int query, Rng& rng);

// Shuffles every example's order within support and query; leaves membership intact.
void shuffle_episode(TaskEpisode& episode, Rng& rng);

// Manifest with dataset name, seed and the drawn instance indices and ids.
nlohmann::json episode_manifest(const TaskEpisode& episode);
// Rebuilds the episode recorded by `manifest` from the same task dataset. Throws
// SchemaError when the recorded ids no longer match the dataset.
TaskEpisode materialize_episode(const Dataset& task_dataset, const nlohmann::json& manifest);

// Zero-mean, unit-variance target scaling fitted on one split.
struct TargetScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static TargetScaler fit(const std::vector<Example>& examples);
  void apply(std::vector<Example>& examples) const;
  std::vector<double> invert(const std::vector<double>& scaled) const;
};

// ---------------------------------------------------------------------------
// Link prediction

struct LinkPair {
  Edge pair;
  int label = 0;  // 1 for a held-out edge, 0 for a sampled non-edge
  int group = 0;  // index of the positive the pair is ranked with
};

struct LinkSplit {
  Graph message_graph;  // original nodes, message edges only
  std::vector<LinkPair> train;
  std::vector<LinkPair> test;
};

// Partitions the edges into message / training / test sets (floor counts for the first
// two, the remainder for test). Negatives are distinct non-edges of the full graph, drawn
// per positive. Throws ValidationError for bad ratios or when a part would be empty.
LinkSplit link_prediction_split(const Graph& graph, double message_ratio, double train_ratio,
                                int negatives_per_train_positive, int negatives_per_test_positive, Rng& rng);

inline constexpr double kDefaultMessageRatio = 0.8;
inline constexpr double kDefaultTrainRatio = 0.1;
inline constexpr int kDefaultTrainNegatives = 1;
inline constexpr int kDefaultTestNegatives = 100;

// Induced graphs around each pair, built on the message graph only.
std::vector<Example> link_examples(const LinkSplit& split, const std::vector<LinkPair>& pairs,
                                   int hops = kDefaultHops, int max_nodes = kDefaultMaxNodes);

}  // namespace gprompt
