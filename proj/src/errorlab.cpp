#include "graphprompt/errorlab.hpp"

#include "graphprompt/errors.hpp"
#include "graphprompt/optim.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace gprompt {

Transformation for_graph(const Transformation& t, std::size_t index) {
  return Transformation{t.kind, t.ratio, derive_seed(t.seed, static_cast<std::uint64_t>(index))};
}

Graph apply(const Transformation& t, const Graph& graph) {
  Rng rng(t.seed);
  return augment(graph, t.kind, t.ratio, rng);
}

namespace {

void check_frozen(const BackboneModel& m) {
  if (!m.frozen()) throw ContractError("the imitation lab requires a frozen backbone");
}

void check_dims(const BackboneModel& m, const Graph& g) {
  if (g.feature_dim() != m.config().input_dim) {
    throw ValidationError(fmt::format("graph feature dimension {} does not match the encoder input {}",
                                      g.feature_dim(), m.config().input_dim));
  }
}

struct Pair {
  Graph source;
  RowVector target;
};

std::vector<Pair> make_pairs(const BackboneModel& m, const std::vector<Graph>& graphs, const Transformation& t) {
  std::vector<Pair> pairs;
  pairs.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    check_dims(m, graphs[i]);
    pairs.push_back({graphs[i], forward(m, apply(for_graph(t, i), graphs[i])).graph});
  }
  return pairs;
}

// Mean embedding distance over `pairs`; `grads` receives the gradient of the mean
// squared distance w.r.t. [tokens, structure].
double objective(const BackboneModel& m, const PromptGraph& prompt, const std::vector<Pair>& pairs,
                 std::vector<Matrix>* grads) {
  ad::Tape tape;
  PromptVars pv;
  pv.tokens = grads ? tape.parameter(prompt.tokens) : tape.constant(prompt.tokens);
  pv.structure = grads ? tape.parameter(prompt.structure_params) : tape.constant(prompt.structure_params);
  std::vector<ad::Var> weights;
  for (const Matrix& w : m.weights()) weights.push_back(tape.constant(w));

  double distance = 0.0;
  ad::Var total;
  const double n = static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const InsertedInput in = insert_on_tape(tape, prompt, pv, pairs[i].source);
    const ad::Var diff = ad::sub(encode(m.config(), weights, in.features, in.norm_adjacency),
                                 tape.constant(pairs[i].target));
    const ad::Var sq = ad::squared_norm(diff);
    distance += std::sqrt(sq.value()(0, 0)) / n;
    total = i == 0 ? sq : ad::add(total, sq);
  }
  if (grads) {
    const ad::Var loss = ad::scale(total, 1.0 / n);
    if (!std::isfinite(loss.value()(0, 0))) throw NumericError("imitation objective is not finite");
    tape.backward(loss);
    *grads = {tape.grad(pv.tokens), tape.grad(pv.structure)};
  }
  return distance;
}

struct Run {
  double initial = 0.0;
  double best = 0.0;
  std::vector<double> trace;
};

Run descend(const BackboneModel& m, PromptGraph prompt, const std::vector<Pair>& pairs, const TuneConfig& tune) {
  if (tune.steps < 0) throw ValidationError("steps must be >= 0");
  Optimizer opt(tune.optimizer, tune.learning_rate);
  std::vector<Matrix> params{prompt.tokens, prompt.structure_params};
  std::vector<Matrix> grads;
  Run r;
  r.best = std::numeric_limits<double>::infinity();
  for (int step = 0; step <= tune.steps; ++step) {
    const bool last = step == tune.steps;
    prompt.tokens = params[0];
    prompt.structure_params = params[1];
    const double value = objective(m, prompt, pairs, last ? nullptr : &grads);
    if (!std::isfinite(value)) throw NumericError(fmt::format("imitation error is not finite at step {}", step));
    if (step == 0) r.initial = value;
    r.best = std::min(r.best, value);
    r.trace.push_back(value);
    if (!last) opt.step(params, grads);
  }
  return r;
}

}  // namespace

double imitation_error(const BackboneModel& frozen_model, const Graph& graph, const Transformation& t,
                       const std::optional<PromptGraph>& prompt) {
  check_frozen(frozen_model);
  check_dims(frozen_model, graph);
  if (prompt && prompt->feature_dim() != graph.feature_dim()) {
    throw ValidationError("prompt token dimension does not match the graph features");
  }
  const RowVector left = forward(frozen_model, prompt ? insert(*prompt, graph) : graph).graph;
  const RowVector right = forward(frozen_model, apply(t, graph)).graph;
  return (left - right).norm();
}

double mean_imitation_error(const BackboneModel& frozen_model, const std::vector<Graph>& graphs,
                            const Transformation& t) {
  if (graphs.empty()) throw ValidationError("imitation error over an empty graph set");
  double total = 0.0;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    total += imitation_error(frozen_model, graphs[i], for_graph(t, i));
  }
  return total / static_cast<double>(graphs.size());
}

std::string to_string(PromptSharing s) { return s == PromptSharing::shared ? "shared" : "per_graph"; }

PromptSharing parse_prompt_sharing(const std::string& s) {
  if (s == "shared") return PromptSharing::shared;
  if (s == "per_graph") return PromptSharing::per_graph;
  throw ValidationError("unknown prompt sharing '" + s + "'");
}

nlohmann::json to_json(const ImitationConfig& c) {
  return nlohmann::json{{"steps", c.tune.steps},
                        {"learning_rate", c.tune.learning_rate},
                        {"optimizer", to_string(c.tune.optimizer)},
                        {"sharing", to_string(c.sharing)},
                        {"insert_mode", to_string(c.insert_mode)},
                        {"structure_mode", to_string(c.structure_mode)},
                        {"delta", c.delta},
                        {"seed", c.seed}};
}

ImitationResult learn_imitation_prompt(const BackboneModel& frozen_model, const std::vector<Graph>& graphs,
                                       const Transformation& t, int num_tokens, const ImitationConfig& config) {
  check_frozen(frozen_model);
  if (graphs.empty()) throw ValidationError("imitation learning over an empty graph set");
  if (num_tokens < 1) throw ValidationError("an imitation prompt needs at least one token");
  const std::vector<Pair> pairs = make_pairs(frozen_model, graphs, t);
  const int d = frozen_model.config().input_dim;

  ImitationResult out;
  out.kind = t.kind;
  out.insert_mode = config.insert_mode;
  out.num_tokens = num_tokens;
  out.no_prompt_error = mean_imitation_error(frozen_model, graphs, t);

  auto fresh_prompt = [&](std::uint64_t stream) {
    Rng rng(derive_seed(config.seed, stream));
    return init_prompt(num_tokens, d, config.structure_mode, config.insert_mode, config.delta, rng);
  };

  if (config.sharing == PromptSharing::shared) {
    const Run r = descend(frozen_model, fresh_prompt(0), pairs, config.tune);
    out.initial_error = r.initial;
    out.final_error = r.best;
    out.trace = r.trace;
  } else {
    const double n = static_cast<double>(pairs.size());
    out.trace.assign(static_cast<std::size_t>(config.tune.steps) + 1, 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Run r = descend(frozen_model, fresh_prompt(i), {pairs[i]}, config.tune);
      out.initial_error += r.initial / n;
      out.final_error += r.best / n;
      for (std::size_t s = 0; s < r.trace.size(); ++s) out.trace[s] += r.trace[s] / n;
    }
  }
  out.red_percent = out.no_prompt_error > 0.0 ? 100.0 * (1.0 - out.final_error / out.no_prompt_error) : 0.0;
  return out;
}

ErrorTable error_reduction_table(const BackboneModel& frozen_model, const std::vector<Graph>& graphs,
                                 const std::vector<int>& token_counts, const std::vector<Augmentation>& transformations,
                                 double ratio, std::uint64_t transformation_seed, const ImitationConfig& config) {
  check_frozen(frozen_model);
  if (transformations.empty()) throw ValidationError("error table needs at least one transformation");
  ErrorTable table;
  table.transformations = transformations;
  table.ratio = ratio;

  std::vector<Transformation> ts;
  for (std::size_t j = 0; j < transformations.size(); ++j) {
    ts.push_back({transformations[j], ratio, derive_seed(transformation_seed, to_string(transformations[j]))});
    table.no_prompt.push_back(mean_imitation_error(frozen_model, graphs, ts.back()));
  }

  std::vector<std::pair<int, ImitationConfig>> row_specs;
  ImitationConfig naive = config;
  naive.insert_mode = InsertMode::simple_feature_add;
  row_specs.push_back({1, naive});
  for (int k : token_counts) row_specs.push_back({k, config});
  for (const auto& [k, c] : row_specs) {
    table.rows.push_back({c.insert_mode == InsertMode::simple_feature_add ? "naive" : "prompt_graph", k,
                          std::vector<ImitationResult>(ts.size()), 0.0});
  }

  // Cells are independent optimisations; a shared counter hands them to the workers.
  const std::size_t cells = row_specs.size() * ts.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t c = next++; c < cells; c = next++) {
      const std::size_t r = c / ts.size(), j = c % ts.size();
      try {
        table.rows[r].cells[j] =
            learn_imitation_prompt(frozen_model, graphs, ts[j], row_specs[r].first, row_specs[r].second);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(config.threads, static_cast<int>(cells)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (ErrorTableRow& row : table.rows) {
    for (const ImitationResult& cell : row.cells) row.red_percent += cell.red_percent / static_cast<double>(ts.size());
  }
  return table;
}

nlohmann::json to_json(const ErrorTable& table) {
  nlohmann::json j;
  j["transformations"] = nlohmann::json::array();
  for (Augmentation a : table.transformations) j["transformations"].push_back(to_string(a));
  j["ratio"] = table.ratio;
  j["no_prompt"] = table.no_prompt;
  j["rows"] = nlohmann::json::array();
  for (const ErrorTableRow& row : table.rows) {
    nlohmann::json r{{"solution", row.solution}, {"tokens", row.num_tokens}, {"red_percent", row.red_percent}};
    r["cells"] = nlohmann::json::array();
    for (const ImitationResult& c : row.cells) {
      r["cells"].push_back({{"transformation", to_string(c.kind)},
                            {"insert_mode", to_string(c.insert_mode)},
                            {"initial_error", c.initial_error},
                            {"final_error", c.final_error},
                            {"red_percent", c.red_percent}});
    }
    j["rows"].push_back(std::move(r));
  }
  return j;
}

std::string render_markdown(const ErrorTable& table) {
  std::string out = "| Prompt solution | Tokens |";
  std::string rule = "|---|---:|";
  for (Augmentation a : table.transformations) {
    out += " " + to_string(a) + " |";
    rule += "---:|";
  }
  out += " RED (%) |\n" + rule + "---:|\n";
  out += "| without prompt | 0 |";
  for (double e : table.no_prompt) out += fmt::format(" {:.4f} |", e);
  out += " - |\n";
  for (const ErrorTableRow& row : table.rows) {
    out += fmt::format("| {} | {} |", row.solution == "naive" ? "naive token" : "prompt graph", row.num_tokens);
    for (const ImitationResult& c : row.cells) out += fmt::format(" {:.4f} |", c.final_error);
    out += fmt::format(" {:.2f} |\n", row.red_percent);
  }
  return out;
}

}  // namespace gprompt
