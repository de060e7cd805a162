#include "graphprompt/prompt.hpp"

#include "graphprompt/checkpoint.hpp"
#include "graphprompt/errors.hpp"
#include "graphprompt/log.hpp"

#include <cmath>

namespace gprompt {

std::string to_string(StructureMode m) {
  switch (m) {
    case StructureMode::learnable: return "learnable";
    case StructureMode::dot_threshold: return "dot_threshold";
    case StructureMode::independent: return "independent";
  }
  return "unknown";
}

std::string to_string(InsertMode m) {
  switch (m) {
    case InsertMode::weighted_feature_add: return "weighted_feature_add";
    case InsertMode::simple_feature_add: return "simple_feature_add";
    case InsertMode::subgraph: return "subgraph";
  }
  return "unknown";
}

StructureMode parse_structure_mode(const std::string& s) {
  if (s == "learnable") return StructureMode::learnable;
  if (s == "dot_threshold") return StructureMode::dot_threshold;
  if (s == "independent") return StructureMode::independent;
  throw ValidationError("unknown structure mode '" + s + "'");
}

InsertMode parse_insert_mode(const std::string& s) {
  if (s == "weighted_feature_add") return InsertMode::weighted_feature_add;
  if (s == "simple_feature_add") return InsertMode::simple_feature_add;
  if (s == "subgraph") return InsertMode::subgraph;
  throw ValidationError("unknown insert mode '" + s + "'");
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::classify: return "classify";
    case HeadKind::regress: return "regress";
    case HeadKind::link_score: return "link_score";
  }
  return "unknown";
}

std::string to_string(LabelMode m) {
  return m == LabelMode::multiclass_softmax ? "multiclass_softmax" : "multilabel_sigmoid";
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

void check_prompt(const PromptGraph& p) {
  if (p.num_tokens() < 1) throw ValidationError("prompt needs at least one token");
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw ValidationError("prompt threshold delta must lie in (0, 1)");
  const int pairs = p.num_tokens() * (p.num_tokens() - 1) / 2;
  if (p.structure_mode == StructureMode::learnable) {
    if (p.structure_params.rows() != 1 || p.structure_params.cols() != pairs) {
      throw ValidationError("learnable structure needs |P|(|P|-1)/2 parameters");
    }
  } else if (p.structure_params.size() != 0) {
    throw ValidationError("structure parameters are only present in learnable mode");
  }
}

void check_dims(const PromptGraph& p, const Graph& g) {
  check_prompt(p);
  if (p.feature_dim() != g.feature_dim()) {
    throw ValidationError("prompt token dimension " + std::to_string(p.feature_dim()) +
                          " does not match graph feature dimension " + std::to_string(g.feature_dim()));
  }
  if (p.num_tokens() >= g.node_count()) {
    log_warning("prompt has " + std::to_string(p.num_tokens()) + " tokens for a " + std::to_string(g.node_count()) +
                "-node graph; expected far fewer tokens than nodes");
  }
}

}  // namespace

int pair_index(int i, int j, int num_tokens) {
  // Row-major upper triangle without the diagonal.
  return i * num_tokens - i * (i + 1) / 2 + (j - i - 1);
}

std::uint64_t PromptGraph::fingerprint() const {
  Matrix meta(1, 3);
  meta << static_cast<double>(structure_mode), static_cast<double>(insert_mode), delta;
  return content_hash({meta, tokens, structure_params});
}

bool PromptGraph::operator==(const PromptGraph& other) const {
  return fingerprint() == other.fingerprint() && tokens == other.tokens &&
         structure_params.size() == other.structure_params.size() &&
         (structure_params.size() == 0 || structure_params == other.structure_params);
}

PromptGraph init_prompt(int num_tokens, int feature_dim, StructureMode structure_mode, InsertMode insert_mode,
                        double delta, Rng& rng) {
  if (num_tokens < 1) throw ValidationError("prompt needs at least one token");
  if (feature_dim < 1) throw ValidationError("prompt feature dimension must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("prompt threshold delta must lie in (0, 1)");
  PromptGraph p;
  p.tokens = Matrix(num_tokens, feature_dim);
  for (Eigen::Index i = 0; i < p.tokens.size(); ++i) p.tokens(i) = rng.normal(0.0, 0.02);
  p.structure_mode = structure_mode;
  p.insert_mode = insert_mode;
  p.delta = delta;
  if (structure_mode == StructureMode::learnable) {
    p.structure_params = Matrix::Zero(1, num_tokens * (num_tokens - 1) / 2);
  }
  return p;
}

std::vector<std::pair<int, int>> token_structure(const PromptGraph& prompt) {
  check_prompt(prompt);
  std::vector<std::pair<int, int>> out;
  const int k = prompt.num_tokens();
  if (prompt.structure_mode == StructureMode::independent) return out;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double s = prompt.structure_mode == StructureMode::learnable
                           ? sigmoid(prompt.structure_params(0, pair_index(i, j, k)))
                           : sigmoid(prompt.tokens.row(i).dot(prompt.tokens.row(j)));
      if (s > prompt.delta) out.emplace_back(i, j);
    }
  }
  return out;
}

Matrix insertion_weights(const PromptGraph& prompt, const Matrix& features) {
  Matrix s = sigmoid(Matrix(features * prompt.tokens.transpose()));
  return (s.array() > prompt.delta).select(s, 0.0);
}

Graph insert(const PromptGraph& prompt, const Graph& graph) {
  check_dims(prompt, graph);
  const Matrix& x = graph.features();
  switch (prompt.insert_mode) {
    case InsertMode::weighted_feature_add: {
      Graph out = graph;
      out.set_features(x + insertion_weights(prompt, x) * prompt.tokens);
      return out;
    }
    case InsertMode::simple_feature_add: {
      Graph out = graph;
      Matrix xh = x;
      xh.rowwise() += prompt.tokens.colwise().sum();
      out.set_features(std::move(xh));
      return out;
    }
    case InsertMode::subgraph: {
      const int n = graph.node_count();
      const int k = prompt.num_tokens();
      Matrix features(n + k, graph.feature_dim());
      features.topRows(n) = x;
      features.bottomRows(k) = prompt.tokens;
      std::vector<Edge> edges = graph.edges();
      for (const auto& [i, j] : token_structure(prompt)) edges.push_back(Edge{n + i, n + j});
      const Matrix w = insertion_weights(prompt, x);
      for (int v = 0; v < n; ++v) {
        for (int t = 0; t < k; ++t) {
          if (w(v, t) > 0.0) edges.push_back(Edge{v, n + t});
        }
      }
      Graph out(std::move(features), edges);
      if (graph.has_node_labels()) {
        std::vector<int> labels = graph.node_labels();
        labels.resize(static_cast<std::size_t>(n + k), -1);
        out.set_node_labels(std::move(labels));
      }
      out.set_edge_labels(graph.edge_labels());
      std::vector<int> ids(static_cast<std::size_t>(n + k), -1);
      for (int v = 0; v < n; ++v) ids[static_cast<std::size_t>(v)] = graph.original_id(v);
      out.set_node_ids(std::move(ids));
      out.set_graph_class(graph.graph_class());
      out.set_graph_targets(graph.graph_targets());
      return out;
    }
  }
  throw ValidationError("unknown insert mode");
}

InsertedInput insert_on_tape(ad::Tape& tape, const PromptGraph& prompt, const PromptVars& vars, const Graph& graph) {
  check_dims(prompt, graph);
  ad::Var x = tape.constant(graph.features());
  switch (prompt.insert_mode) {
    case InsertMode::weighted_feature_add: {
      ad::Var w = ad::gate_above(ad::sigmoid(ad::matmul(x, ad::transpose(vars.tokens))), prompt.delta);
      return {ad::add(x, ad::matmul(w, vars.tokens)), tape.constant(normalized_adjacency(graph))};
    }
    case InsertMode::simple_feature_add:
      return {ad::add_row(x, ad::sum_rows(vars.tokens)), tape.constant(normalized_adjacency(graph))};
    case InsertMode::subgraph: {
      const Eigen::Index n = graph.node_count();
      const Eigen::Index k = prompt.num_tokens();
      const Eigen::Index total = n + k;
      ad::Var base = tape.constant([&] {
        Matrix a = Matrix::Zero(total, total);
        a.topLeftCorner(n, n) = graph.adjacency_matrix();
        return a;
      }());
      ad::Var adjacency = base;

      ad::Var cross = ad::straight_through_step(ad::sigmoid(ad::matmul(x, ad::transpose(vars.tokens))), prompt.delta);
      std::vector<ad::Placement> cross_at;
      for (Eigen::Index v = 0; v < n; ++v) {
        for (Eigen::Index t = 0; t < k; ++t) {
          cross_at.push_back({v, t, v, n + t});
          cross_at.push_back({v, t, n + t, v});
        }
      }
      adjacency = ad::add(adjacency, ad::scatter(cross, total, total, std::move(cross_at)));

      if (prompt.structure_mode != StructureMode::independent && k > 1) {
        std::vector<ad::Placement> inner_at;
        ad::Var gates;
        if (prompt.structure_mode == StructureMode::learnable) {
          gates = ad::straight_through_step(ad::sigmoid(vars.structure), prompt.delta);
          for (Eigen::Index i = 0; i < k; ++i) {
            for (Eigen::Index j = i + 1; j < k; ++j) {
              const Eigen::Index p = pair_index(static_cast<int>(i), static_cast<int>(j), static_cast<int>(k));
              inner_at.push_back({0, p, n + i, n + j});
              inner_at.push_back({0, p, n + j, n + i});
            }
          }
        } else {
          gates = ad::straight_through_step(ad::sigmoid(ad::matmul(vars.tokens, ad::transpose(vars.tokens))),
                                            prompt.delta);
          for (Eigen::Index i = 0; i < k; ++i) {
            for (Eigen::Index j = i + 1; j < k; ++j) {
              inner_at.push_back({i, j, n + i, n + j});
              inner_at.push_back({i, j, n + j, n + i});
            }
          }
        }
        adjacency = ad::add(adjacency, ad::scatter(gates, total, total, std::move(inner_at)));
      }
      return {ad::vstack({x, vars.tokens}), ad::sym_normalize_adjacency(adjacency)};
    }
  }
  throw ValidationError("unknown insert mode");
}

std::uint64_t TaskHead::fingerprint() const {
  Matrix meta(1, 2);
  meta << static_cast<double>(kind), static_cast<double>(label_mode);
  return content_hash({meta, weight, bias});
}

TaskHead init_head(HeadKind kind, int hidden_dim, int outputs, LabelMode label_mode, Rng& rng) {
  if (hidden_dim < 1 || outputs < 1) throw ValidationError("task head dimensions must be >= 1");
  if (kind == HeadKind::link_score && outputs != 1) throw ValidationError("link-score head has exactly one output");
  TaskHead h;
  h.kind = kind;
  h.label_mode = label_mode;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  h.weight = Matrix(hidden_dim, outputs);
  for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight(i) = rng.uniform(-bound, bound);
  h.bias = Matrix::Zero(1, outputs);
  return h;
}

RowVector head_activation(const TaskHead& head, const RowVector& logits) {
  switch (head.kind) {
    case HeadKind::classify:
      if (head.label_mode == LabelMode::multiclass_softmax) {
        RowVector e = (logits.array() - logits.maxCoeff()).exp().matrix();
        return e / e.sum();
      }
      return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    case HeadKind::link_score:
      return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    case HeadKind::regress:
      return logits;
  }
  return logits;
}

RowVector prompted_forward(const PromptGraph& prompt, const Graph& graph, const BackboneModel& frozen_model,
                           const TaskHead& head) {
  if (!frozen_model.frozen()) throw ContractError("prompting requires a frozen backbone");
  const Embedding emb = forward(frozen_model, insert(prompt, graph));
  if (emb.graph.size() != head.weight.rows()) throw ValidationError("task head input does not match the backbone");
  RowVector logits = emb.graph * head.weight + head.bias.row(0);
  return head_activation(head, logits);
}

void save_prompt(const PromptGraph& prompt, const std::filesystem::path& path, const TaskHead* head) {
  check_prompt(prompt);
  Checkpoint cp;
  cp.config = {{"num_tokens", prompt.num_tokens()},
               {"feature_dim", prompt.feature_dim()},
               {"structure_mode", to_string(prompt.structure_mode)},
               {"insert_mode", to_string(prompt.insert_mode)},
               {"delta", prompt.delta},
               {"fingerprint", hex64(prompt.fingerprint())}};
  cp.arrays = {prompt.tokens, prompt.structure_params};
  if (head) {
    cp.config["head"] = {{"kind", to_string(head->kind)}, {"label_mode", to_string(head->label_mode)}};
    cp.arrays.push_back(head->weight);
    cp.arrays.push_back(head->bias);
  }
  write_checkpoint(path, "prompt", cp);
}

PromptGraph load_prompt(const std::filesystem::path& path, TaskHead* head) {
  Checkpoint cp = read_checkpoint(path, "prompt");
  PromptGraph p;
  try {
    p.structure_mode = parse_structure_mode(cp.config.at("structure_mode").get<std::string>());
    p.insert_mode = parse_insert_mode(cp.config.at("insert_mode").get<std::string>());
    p.delta = cp.config.at("delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": bad prompt config: " + e.what());
  }
  if (cp.arrays.size() < 2) throw SchemaError(path.string() + ": missing prompt arrays");
  p.tokens = cp.arrays[0];
  p.structure_params = cp.arrays[1];
  check_prompt(p);
  if (cp.config.contains("fingerprint") && cp.config["fingerprint"].get<std::string>() != hex64(p.fingerprint())) {
    throw ChecksumError(path.string() + ": fingerprint mismatch");
  }
  if (head) {
    if (!cp.config.contains("head") || cp.arrays.size() != 4) throw SchemaError(path.string() + ": no task head stored");
    const std::string kind = cp.config["head"].at("kind").get<std::string>();
    head->kind = kind == "classify" ? HeadKind::classify : kind == "regress" ? HeadKind::regress : HeadKind::link_score;
    head->label_mode = cp.config["head"].at("label_mode").get<std::string>() == "multilabel_sigmoid"
                           ? LabelMode::multilabel_sigmoid
                           : LabelMode::multiclass_softmax;
    head->weight = cp.arrays[2];
    head->bias = cp.arrays[3];
  }
  return p;
}

}  // namespace gprompt
