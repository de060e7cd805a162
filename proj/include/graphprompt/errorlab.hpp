#pragma once

// How closely a learned prompt lets a frozen encoder imitate a graph transformation:
// the encoder's embedding of the prompted original graph is compared with its
// embedding of the transformed graph.

#include "graphprompt/backbone.hpp"
#include "graphprompt/graph.hpp"
#include "graphprompt/prompt.hpp"
#include "graphprompt/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gprompt {

struct Transformation {
  Augmentation kind = Augmentation::identity;
  double ratio = 0.2;
  std::uint64_t seed = 0;
};

// The transformation applied to the i-th graph of a set: same kind and ratio, its own
// fixed seed. Every row of an error table sees the same transformed graphs.
Transformation for_graph(const Transformation& t, std::size_t index);

Graph apply(const Transformation& t, const Graph& graph);

// || phi(insert(prompt, graph)) - phi(t(graph)) ||_2 on graph embeddings. Without a
// prompt the left side is the untouched graph.
double imitation_error(const BackboneModel& frozen_model, const Graph& graph, const Transformation& t,
                       const std::optional<PromptGraph>& prompt = std::nullopt);

// Mean imitation_error over a graph set, graph i transformed by for_graph(t, i).
double mean_imitation_error(const BackboneModel& frozen_model, const std::vector<Graph>& graphs,
                            const Transformation& t);

enum class PromptSharing {
  per_graph,  // one prompt learned for each graph
  shared,     // one prompt for the whole set
};

std::string to_string(PromptSharing s);
PromptSharing parse_prompt_sharing(const std::string& s);

struct ImitationConfig {
  TuneConfig tune{300, 0.05, OptimizerKind::adam};
  PromptSharing sharing = PromptSharing::per_graph;
  InsertMode insert_mode = InsertMode::weighted_feature_add;
  StructureMode structure_mode = StructureMode::learnable;
  double delta = 0.5;
  std::uint64_t seed = 0;  // token initialisation
  int threads = 1;         // error_reduction_table only
};

nlohmann::json to_json(const ImitationConfig& c);

struct ImitationResult {
  Augmentation kind = Augmentation::identity;
  InsertMode insert_mode = InsertMode::weighted_feature_add;
  int num_tokens = 0;
  double no_prompt_error = 0.0;
  double initial_error = 0.0;  // at the initial prompt
  double final_error = 0.0;    // at the best iterate
  double red_percent = 0.0;    // 100 (1 - final / no_prompt)
  std::vector<double> trace;   // mean error at every iterate
};

// Learns prompts minimising the mean squared imitation error over `graphs` and reports
// the mean error at the best iterate. Throws NumericError when the objective is not
// finite.
ImitationResult learn_imitation_prompt(const BackboneModel& frozen_model, const std::vector<Graph>& graphs,
                                       const Transformation& t, int num_tokens, const ImitationConfig& config);

struct ErrorTableRow {
  std::string solution;  // "naive" or "prompt_graph"
  int num_tokens = 0;
  std::vector<ImitationResult> cells;  // one per transformation
  double red_percent = 0.0;            // mean over cells
};

struct ErrorTable {
  std::vector<Augmentation> transformations;
  double ratio = 0.0;
  std::vector<double> no_prompt;  // one per transformation
  std::vector<ErrorTableRow> rows;  // naive first, then prompt-graph rows by token count
};

// Rows: no prompt, the naive one-token prompt (simple feature add) and one prompt-graph
// row per entry of `token_counts` using config.insert_mode.
ErrorTable error_reduction_table(const BackboneModel& frozen_model, const std::vector<Graph>& graphs,
                                 const std::vector<int>& token_counts, const std::vector<Augmentation>& transformations,
                                 double ratio, std::uint64_t transformation_seed, const ImitationConfig& config);

nlohmann::json to_json(const ErrorTable& table);
std::string render_markdown(const ErrorTable& table);

}  // namespace gprompt
