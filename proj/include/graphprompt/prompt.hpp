#pragma once

#include "graphprompt/autograd.hpp"
#include "graphprompt/backbone.hpp"
#include "graphprompt/graph.hpp"
#include "graphprompt/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace gprompt {

enum class StructureMode { learnable, dot_threshold, independent };
enum class InsertMode { weighted_feature_add, simple_feature_add, subgraph };

std::string to_string(StructureMode m);
std::string to_string(InsertMode m);
StructureMode parse_structure_mode(const std::string& s);
InsertMode parse_insert_mode(const std::string& s);

// Learnable prompt graph: token vectors, their pairwise structure, and the rule that
// inserts them into an input graph.
struct PromptGraph {
  Matrix tokens;  // |P| × d
  StructureMode structure_mode = StructureMode::learnable;
  // 1 × |P|(|P|-1)/2 in learnable mode, ordered (0,1), (0,2), ..., (1,2), ...; 0 × 0 otherwise.
  Matrix structure_params;
  double delta = 0.5;
  InsertMode insert_mode = InsertMode::weighted_feature_add;

  int num_tokens() const { return static_cast<int>(tokens.rows()); }
  int feature_dim() const { return static_cast<int>(tokens.cols()); }
  std::uint64_t fingerprint() const;
  bool operator==(const PromptGraph& other) const;
};

// Index of pair (i, j), i < j, in structure_params.
int pair_index(int i, int j, int num_tokens);

// Tokens ~ N(0, 0.02^2); learnable structure parameters start at 0.
PromptGraph init_prompt(int num_tokens, int feature_dim, StructureMode structure_mode, InsertMode insert_mode,
                        double delta, Rng& rng);

// Connected token pairs (i < j): learnable -> sigma(a_ij) > delta;
// dot_threshold -> sigma(p_i . p_j) > delta; independent -> none.
std::vector<std::pair<int, int>> token_structure(const PromptGraph& prompt);

// Insertion weights w_ik = sigma(p_k . x_i) when that exceeds delta, else 0 (N × |P|).
Matrix insertion_weights(const PromptGraph& prompt, const Matrix& features);

// The manipulated graph. Feature-add modes keep nodes and edges; subgraph mode appends
// |P| token nodes (node id -1) wired by token_structure and by cross edges where w_ik > 0.
Graph insert(const PromptGraph& prompt, const Graph& graph);

// Differentiable insertion: prompt tokens/structure as tape variables.
struct PromptVars {
  ad::Var tokens;
  ad::Var structure;  // unused unless learnable structure in subgraph mode
};

struct InsertedInput {
  ad::Var features;
  ad::Var norm_adjacency;
};

// Hard thresholds are kept at forward time. In the feature-add modes gradients flow
// through the surviving sigmoid weights; in subgraph mode edge gates use a
// straight-through estimator.
InsertedInput insert_on_tape(ad::Tape& tape, const PromptGraph& prompt, const PromptVars& vars, const Graph& graph);

enum class HeadKind { classify, regress, link_score };
enum class LabelMode { multiclass_softmax, multilabel_sigmoid };

std::string to_string(HeadKind k);
std::string to_string(LabelMode m);

// Affine answering layer on the graph embedding.
struct TaskHead {
  HeadKind kind = HeadKind::classify;
  LabelMode label_mode = LabelMode::multiclass_softmax;
  Matrix weight;  // d_h × C
  Matrix bias;    // 1 × C

  int outputs() const { return static_cast<int>(weight.cols()); }
  std::uint64_t fingerprint() const;
};

TaskHead init_head(HeadKind kind, int hidden_dim, int outputs, LabelMode label_mode, Rng& rng);

// Maps raw head outputs to predictions: softmax / sigmoid / identity per head kind.
RowVector head_activation(const TaskHead& head, const RowVector& logits);

// head(forward(frozen_model, insert(prompt, graph))). Throws ContractError when the
// backbone is not frozen.
RowVector prompted_forward(const PromptGraph& prompt, const Graph& graph, const BackboneModel& frozen_model,
                           const TaskHead& head);

void save_prompt(const PromptGraph& prompt, const std::filesystem::path& path, const TaskHead* head = nullptr);
PromptGraph load_prompt(const std::filesystem::path& path, TaskHead* head = nullptr);

}  // namespace gprompt
