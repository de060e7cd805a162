// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero when any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include "graphprompt/checkpoint.hpp"
#include "graphprompt/errorlab.hpp"
#include "graphprompt/errors.hpp"
#include "graphprompt/experiment.hpp"
#include "graphprompt/log.hpp"
#include "graphprompt/meta.hpp"
#include "graphprompt/metrics.hpp"
#include "graphprompt/pretrain.hpp"
#include "graphprompt/tasks.hpp"
#include "graphprompt/training.hpp"

#include "../unit/test_support.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

using namespace gprompt;
using testing_support::finite_difference;
using testing_support::random_graph;
using testing_support::random_matrix;
using testing_support::relative_error;

namespace {

// Tolerances and thresholds.
constexpr double kRedThreshold = 80.0;       // criterion 1, percent
constexpr double kRuntimeLimit = 300.0;      // criterion 1, seconds
constexpr double kRedSlack = 2.0;            // criterion 2, percentage points
constexpr double kGradientTolerance = 1e-4;  // criterion 3
constexpr int kGradientInstances = 20;
constexpr int kOracleTrials = 100;           // criterion 4
constexpr int kWeightPairs = 1000;           // criterion 5
constexpr double kFinetuneMargin = 1.0;      // criterion 7, accuracy points
constexpr int kFinetuneSeedsNeeded = 3;
constexpr double kMetaShare = 0.8;           // criterion 9
constexpr int kMetaTrainTasks = 40;
constexpr int kMetaHeldOut = 20;
constexpr int kAdaptSteps = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1 and 2: error bound

const char* kErrorBoundConfig = R"({
  "name": "error-bound",
  "dataset": {"synthetic": {"level": "graph", "num_classes": 2, "graphs_per_class": 25,
                            "min_nodes": 20, "max_nodes": 50, "feature_dim": 8}, "seed": 0},
  "backbone": {"hidden_dim": 32, "depth": 2, "activation": "relu", "readout": "mean"},
  "pretrain": {"objective": "graphcl", "epochs": 30, "batch_size": 10, "learning_rate": 0.01},
  "error_bound": {"token_counts": [3, 5, 10], "ratio": 0.2, "transformation_seed": 0, "max_graphs": 50,
                  "sharing": "per_graph", "insert_mode": "weighted_feature_add", "delta": 0.1,
                  "tune": {"steps": 1000, "learning_rate": 0.003, "optimizer": "adam"}}
})";

struct ErrorBoundRun {
  ErrorTable table;
  double seconds = 0.0;
};

const ErrorBoundRun& error_bound_run() {
  static const ErrorBoundRun run = [] {
    const auto start = std::chrono::steady_clock::now();
    ErrorTable t = run_error_bound(experiment_config_from_json(nlohmann::json::parse(kErrorBoundConfig)), 0, 1);
    return ErrorBoundRun{std::move(t),
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
  }();
  return run;
}

const ErrorTableRow& row_with(const ErrorTable& t, const std::string& solution, int tokens) {
  for (const ErrorTableRow& r : t.rows)
    if (r.solution == solution && r.num_tokens == tokens) return r;
  throw std::runtime_error(fmt::format("no {} row with {} tokens", solution, tokens));
}

Outcome criterion_1() {
  const ErrorBoundRun& run = error_bound_run();
  const ErrorTable& t = run.table;
  const ErrorTableRow& naive = row_with(t, "naive", 1);
  const ErrorTableRow& pg = row_with(t, "prompt_graph", 10);
  bool ok = run.seconds <= kRuntimeLimit;
  std::string cells;
  for (std::size_t j = 0; j < t.transformations.size(); ++j) {
    const double none = t.no_prompt[j], one = naive.cells[j].final_error, ten = pg.cells[j].final_error;
    const bool ordered = ten < one && one < none;
    ok = ok && ordered;
    cells += fmt::format("{} {:.4g}<{:.4g}<{:.4g} {}; ", to_string(t.transformations[j]), ten, one, none,
                         ordered ? "ok" : "VIOLATED");
  }
  ok = ok && pg.red_percent >= kRedThreshold;
  return {ok, fmt::format("{}RED(10)={:.2f}% (need >= {:.0f}), {:.1f}s (limit {:.0f}s)", cells, pg.red_percent,
                          kRedThreshold, run.seconds, kRuntimeLimit)};
}

Outcome criterion_2() {
  const ErrorTable& t = error_bound_run().table;
  const std::vector<double> red{row_with(t, "naive", 1).red_percent, row_with(t, "prompt_graph", 3).red_percent,
                                row_with(t, "prompt_graph", 5).red_percent,
                                row_with(t, "prompt_graph", 10).red_percent};
  bool ok = true;
  for (std::size_t i = 1; i < red.size(); ++i) ok = ok && red[i] >= red[i - 1] - kRedSlack;
  return {ok, fmt::format("RED over tokens 1/3/5/10: {:.2f} / {:.2f} / {:.2f} / {:.2f} (slack {:.0f} pp)", red[0],
                          red[1], red[2], red[3], kRedSlack)};
}

// ---------------------------------------------------------------------------
// 3: gradients against central differences

Outcome criterion_3() {
  Rng rng(3);
  double worst_a = 0.0, worst_b = 0.0;
  for (int t = 0; t < kGradientInstances; ++t) {
    const Activation act = t % 2 == 0 ? Activation::tanh : Activation::relu;
    const BackboneModel m = init_backbone(3, 4, 2, act, Readout::mean, rng);
    std::vector<Graph> va, vb;
    for (int i = 0; i < 3; ++i) {
      const Graph g = random_graph(rng, 2 + static_cast<int>(rng.index(7)), 0.4, 3);
      va.push_back(augment(g, Augmentation::drop_edges, 0.2, rng));
      vb.push_back(augment(g, Augmentation::mask_features, 0.2, rng));
    }
    const LossFunction loss = [&](const std::vector<Matrix>& w, std::vector<Matrix>* g) {
      return contrastive_loss(m.config(), w, va, vb, 0.5, g);
    };
    std::vector<Matrix> analytic;
    loss(m.weights(), &analytic);
    worst_a = std::max(worst_a, relative_error(analytic, finite_difference(loss, m.weights())));
  }
  for (int t = 0; t < kGradientInstances; ++t) {
    BackboneModel m = init_backbone(3, 5, 2, Activation::tanh, Readout::mean, rng);
    m.freeze();
    const InsertMode mode = t % 2 == 0 ? InsertMode::weighted_feature_add : InsertMode::simple_feature_add;
    PromptGraph p = init_prompt(3, 3, StructureMode::learnable, mode, 0.5, rng);
    p.tokens = random_matrix(rng, 3, 3);
    const TaskHead head = init_head(HeadKind::classify, 5, 2, LabelMode::multiclass_softmax, rng);
    std::vector<Example> examples;
    for (int i = 0; i < 4; ++i) {
      Example ex;
      ex.graph = random_graph(rng, 2 + static_cast<int>(rng.index(7)), 0.4, 3);
      ex.label = i % 2;
      examples.push_back(std::move(ex));
    }
    const LossFunction loss = [&](const std::vector<Matrix>& tokens, std::vector<Matrix>* grads) {
      PromptedModel model{m, p, head};
      model.prompt->tokens = tokens[0];
      std::vector<Matrix> all;
      const double value = task_loss(model, kPromptAndHead, examples, grads ? &all : nullptr);
      if (grads) *grads = {all[0]};
      return value;
    };
    std::vector<Matrix> analytic;
    loss({p.tokens}, &analytic);
    worst_b = std::max(worst_b, relative_error(analytic, finite_difference(loss, {p.tokens})));
  }
  const bool ok = worst_a < kGradientTolerance && worst_b < kGradientTolerance;
  return {ok, fmt::format("max relative error: NT-Xent/encoder {:.2e}, task loss/prompt tokens {:.2e} "
                          "(limit {:.0e}, {} instances each)",
                          worst_a, worst_b, kGradientTolerance, kGradientInstances)};
}

// ---------------------------------------------------------------------------
// 4: oracles

std::vector<std::vector<int>> distances(const Graph& g) {
  const int n = g.node_count();
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), inf));
  for (int v = 0; v < n; ++v) d[v][v] = 0;
  for (const Edge& e : g.edges()) d[e.u][e.v] = d[e.v][e.u] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

double auc_by_pairs(const Matrix& scores, const std::vector<int>& labels) {
  std::set<int> present(labels.begin(), labels.end());
  double total = 0.0;
  for (int k : present) {
    double good = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = 0; j < labels.size(); ++j)
        if (labels[i] == k && labels[j] != k) {
          const double a = scores(static_cast<Eigen::Index>(i), k), b = scores(static_cast<Eigen::Index>(j), k);
          pairs += 1.0;
          good += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
        }
    total += good / pairs;
  }
  return total / static_cast<double>(present.size());
}

double f1_by_confusion(const Matrix& scores, const std::vector<int>& labels) {
  const int c = static_cast<int>(scores.cols());
  std::vector<std::vector<int>> confusion(static_cast<std::size_t>(c), std::vector<int>(static_cast<std::size_t>(c), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int arg = 0;
    for (int j = 1; j < c; ++j)
      if (scores(static_cast<Eigen::Index>(i), j) > scores(static_cast<Eigen::Index>(i), arg)) arg = j;
    ++confusion[labels[i]][arg];
  }
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < c; ++k) {
    int tp = confusion[k][k], fn = 0, fp = 0;
    for (int j = 0; j < c; ++j) {
      if (j == k) continue;
      fn += confusion[k][j];
      fp += confusion[j][k];
    }
    if (tp + fn + fp == 0) continue;
    sum += 2.0 * tp / (2.0 * tp + fp + fn);
    ++used;
  }
  return sum / used;
}

Outcome criterion_4() {
  Rng rng(4);
  int mismatches = 0;
  for (int trial = 0; trial < kOracleTrials; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(49));
    const Graph g = random_graph(rng, n, 0.08, 2);
    const auto d = distances(g);
    const int hops = 1 + static_cast<int>(rng.index(3));
    std::vector<int> sources{static_cast<int>(rng.index(static_cast<std::size_t>(n)))};
    Target target = sources[0];
    if (trial % 2 == 1 && g.edge_count() > 0) {
      const Edge e = g.edges()[rng.index(g.edge_count())];
      sources = {e.u, e.v};
      target = e;
    }
    const Graph sub = induced_graph(g, target, hops, n);
    std::set<int> expected;
    for (int v = 0; v < n; ++v)
      for (int s : sources)
        if (d[s][v] <= hops) expected.insert(v);
    std::set<int> got;
    for (int v = 0; v < sub.node_count(); ++v) got.insert(sub.original_id(v));
    std::size_t edges = 0;
    for (const Edge& e : g.edges()) edges += expected.count(e.u) && expected.count(e.v);
    bool same = got == expected && sub.edge_count() == edges;
    for (const Edge& e : sub.edges()) same = same && g.has_edge(sub.original_id(e.u), sub.original_id(e.v));
    mismatches += !same;
  }
  const int graph_mismatches = mismatches;

  for (int trial = 0; trial < kOracleTrials; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(99));
    const int c = 2 + static_cast<int>(rng.index(3));
    Matrix scores(n, c);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) scores(i, j) = std::round(rng.uniform(0, 1) * 20) / 20;
      labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(static_cast<std::size_t>(c)));
    }
    labels[0] = 0;
    labels[1] = 1;
    mismatches += std::abs(auc(scores, labels) - auc_by_pairs(scores, labels)) > 1e-12;
    mismatches += std::abs(macro_f1(scores, labels) - f1_by_confusion(scores, labels)) > 1e-12;

    // ranking: each group has one positive; ties rank the positive last
    const int groups = 1 + static_cast<int>(rng.index(10));
    std::vector<double> s;
    std::vector<int> y, grp, expected;
    for (int q = 0; q < groups; ++q) {
      const int size = 1 + static_cast<int>(rng.index(15));
      double positive = 0.0;
      int better = 0;
      std::vector<double> negatives;
      for (int i = 0; i < size; ++i) {
        const double v = std::round(rng.uniform(0, 1) * 10) / 10;
        s.push_back(v);
        y.push_back(i == 0);
        grp.push_back(q);
        if (i == 0) positive = v;
        else negatives.push_back(v);
      }
      for (double v : negatives) better += v >= positive;
      expected.push_back(better + 1);
    }
    const auto ranks = positive_ranks(s, y, grp);
    mismatches += ranks != expected;
    double mrr = 0.0;
    for (int r : expected) mrr += 1.0 / r;
    mismatches += std::abs(mean_reciprocal_rank(ranks) - mrr / groups) > 1e-12;
    for (int k : {1, 5, 10}) {
      double hits = 0.0;
      for (int r : expected) hits += r <= k;
      mismatches += std::abs(hit_at(ranks, k) - hits / groups) > 1e-12;
    }
  }
  return {mismatches == 0, fmt::format("{} induced-graph mismatches, {} metric mismatches over {} + {} trials",
                                       graph_mismatches, mismatches - graph_mismatches, kOracleTrials,
                                       kOracleTrials)};
}

// ---------------------------------------------------------------------------
// 5: insertion identities

Outcome criterion_5() {
  Rng rng(5);
  int identity_failures = 0, subgraph_failures = 0, weight_failures = 0;
  for (int t = 0; t < 100; ++t) {
    const Graph g = random_graph(rng, 1 + static_cast<int>(rng.index(30)), 0.2, 4);
    PromptGraph zero = init_prompt(1 + static_cast<int>(rng.index(5)), 4, StructureMode::learnable,
                                   InsertMode::weighted_feature_add, rng.uniform(0.0, 0.9), rng);
    zero.tokens.setZero();
    const Graph same = insert(zero, g);
    identity_failures += !(same.features() == g.features() && same.edges() == g.edges());

    PromptGraph sub = init_prompt(1 + static_cast<int>(rng.index(5)), 4, StructureMode::learnable,
                                  InsertMode::subgraph, rng.uniform(0.0, 0.9), rng);
    sub.tokens = random_matrix(rng, sub.num_tokens(), 4);
    sub.structure_params = random_matrix(rng, 1, sub.structure_params.cols(), 2.0);
    const Graph big = insert(sub, g);
    const int n = g.node_count();
    std::vector<Edge> original;
    for (const Edge& e : big.edges())
      if (e.u < n && e.v < n) original.push_back(e);
    subgraph_failures += !(big.node_count() == n + sub.num_tokens() && original == g.edges() &&
                           big.features().topRows(n) == g.features());
  }
  int pairs = 0;
  while (pairs < kWeightPairs) {
    const double delta = rng.uniform(0.0, 0.95);
    PromptGraph p = init_prompt(1 + static_cast<int>(rng.index(4)), 3, StructureMode::independent,
                                InsertMode::weighted_feature_add, delta, rng);
    p.tokens = random_matrix(rng, p.num_tokens(), 3);
    const Matrix x = random_matrix(rng, 1 + static_cast<int>(rng.index(10)), 3, 2.0);
    const Matrix w = insertion_weights(p, x);
    for (Eigen::Index i = 0; i < w.size() && pairs < kWeightPairs; ++i, ++pairs) {
      weight_failures += !(w(i) == 0.0 || (w(i) > delta && w(i) < 1.0));
    }
  }
  const bool ok = identity_failures + subgraph_failures + weight_failures == 0;
  return {ok, fmt::format("zero-token identity failures {}/100, subgraph failures {}/100, weights outside "
                          "{{0}} u (delta, 1): {}/{}",
                          identity_failures, subgraph_failures, weight_failures, kWeightPairs)};
}

// ---------------------------------------------------------------------------
// 6: frozen backbone

Outcome criterion_6() {
  Rng rng(6);
  GeneratorSpec spec;
  spec.level = "node";
  spec.nodes_per_class = 20;
  spec.feature_dim = 4;
  const Dataset data = synthesize_dataset(spec, rng);
  const Dataset task = reformulate_task(data, TaskKind::node, 1, 8);
  std::vector<TaskEpisode> episodes;
  for (int i = 0; i < 3; ++i) episodes.push_back(sample_few_shot(task, 3, 3, rng));

  BackboneModel frozen = init_backbone(4, 8, 2, Activation::relu, Readout::mean, rng);
  frozen.freeze();
  const std::uint64_t print = frozen.fingerprint();
  const BackboneModel copy = frozen;
  std::vector<std::string> changed;
  auto check = [&](const std::string& what) {
    if (frozen.fingerprint() != print || !(frozen.weights() == copy.weights())) changed.push_back(what);
  };

  const PromptGraph p = init_prompt(3, 4, StructureMode::learnable, InsertMode::weighted_feature_add, 0.5, rng);
  const TaskHead h = init_head(HeadKind::classify, 8, 2, LabelMode::multiclass_softmax, rng);
  const TuneResult tuned = tune_prompt(p, h, episodes, frozen, {20, 0.01, OptimizerKind::adam});
  check("tune_prompt");
  MetaConfig mc;
  mc.outer_steps = 5;
  mc.meta_batch = 2;
  meta_train(p, h, TaskSampler(episodes), frozen, mc);
  check("meta_train");
  adapted_query_loss(p, h, episodes[0], frozen, 3, 0.01);
  check("adapted_query_loss");
  predict(PromptedModel{frozen, tuned.prompt, tuned.head}, episodes[0].query);
  check("predict");
  std::vector<Graph> graphs;
  for (const Example& ex : episodes[0].support) graphs.push_back(ex.graph);
  ImitationConfig ic;
  ic.tune.steps = 5;
  learn_imitation_prompt(frozen, graphs, {Augmentation::drop_edges, 0.2, 1}, 2, ic);
  check("learn_imitation_prompt");

  // evaluation runs from a checkpoint: the report records the same encoder
  const auto dir = std::filesystem::temp_directory_path() / "gp_acceptance_c6";
  std::filesystem::create_directories(dir);
  save_backbone(frozen, dir / "backbone.ckpt");
  nlohmann::json j = nlohmann::json::parse(R"({
    "dataset": {"synthetic": {"level": "node", "nodes_per_class": 20, "feature_dim": 4}, "seed": 6},
    "task": {"level": "node", "shots": 6, "query": 3, "hops": 1, "max_nodes": 8},
    "seeds": [0, 1], "schemes": ["prompt", "meta_prompt"],
    "tune": {"steps": 10},
    "meta": {"outer_steps": 3, "tasks": 3, "shots": 2, "query": 2, "meta_batch": 2}
  })");
  j["backbone"] = {{"checkpoint", (dir / "backbone.ckpt").string()}};
  const ResultsReport r = run_experiment(experiment_config_from_json(j));
  for (const auto& [seed, fp] : r.backbone_fingerprints)
    if (fp != hex64(print)) changed.push_back(fmt::format("run_experiment seed {}", seed));
  if (load_backbone(dir / "backbone.ckpt").fingerprint() != print) changed.push_back("checkpoint file");
  std::filesystem::remove_all(dir);

  std::string detail = changed.empty() ? "fingerprint unchanged across tune, meta-train, adaptation, prediction, "
                                         "imitation and a checkpointed evaluation run"
                                       : "changed after:";
  for (const std::string& c : changed) detail += " " + c;
  return {changed.empty(), detail};
}

// ---------------------------------------------------------------------------
// 7 and 8: experiments

const char* kFewShotConfig = R"({
  "name": "node-3class-100shot",
  "dataset": {"synthetic": {"level": "node", "num_classes": 3, "nodes_per_class": 200, "feature_dim": 8,
                            "p_intra": 0.03, "p_inter": 0.005, "feature_separation": 1.0, "feature_noise": 1.0},
              "seed": 0},
  "task": {"level": "node", "shots": 100, "query": 50, "hops": 1, "max_nodes": 20},
  "seeds": [0, 1, 2, 3, 4],
  "schemes": ["supervised", "pretrain_finetune", "prompt"],
  "backbone": {"hidden_dim": 32, "depth": 2},
  "pretrain": {"epochs": 20, "batch_size": 32, "learning_rate": 0.01, "max_graphs": 300},
  "prompt": {"num_tokens": 10},
  "tune": {"steps": 200, "learning_rate": 0.01},
  "finetune": {"steps": 200, "learning_rate": 0.01}
})";

const char* kTransferConfig = R"({
  "name": "transfer-graph-to-edge",
  "dataset": {"synthetic": {"level": "node", "num_classes": 2, "nodes_per_class": 200, "feature_dim": 8,
                            "p_intra": 0.03, "p_inter": 0.005, "feature_separation": 2.0, "feature_noise": 1.0},
              "seed": 0},
  "task": {"level": "node", "shots": 100, "query": 50, "hops": 1, "max_nodes": 2},
  "seeds": [0, 1, 2, 3, 4],
  "schemes": ["prompt"],
  "backbone": {"hidden_dim": 32, "depth": 2},
  "pretrain": {"epochs": 20, "batch_size": 32, "learning_rate": 0.01, "max_graphs": 300},
  "prompt": {"num_tokens": 10},
  "tune": {"steps": 200, "learning_rate": 0.01},
  "finetune": {"steps": 200, "learning_rate": 0.01},
  "transfer": {"source_level": "graph", "target_level": "edge", "schemes": ["hard", "fine_tune", "prompt"]}
})";

double mean_of(const ResultsReport& r, const std::string& scheme, const std::string& metric) {
  for (const SchemeSummary& s : r.summaries)
    if (s.scheme == scheme) return s.mean.at(metric);
  throw std::runtime_error("no summary for " + scheme);
}

double run_metric(const ResultsReport& r, std::uint64_t seed, const std::string& scheme) {
  for (const RunRecord& run : r.runs)
    if (run.seed == seed && run.scheme == scheme) return run.metrics.at("acc");
  throw std::runtime_error("missing run");
}

Outcome criterion_7() {
  const ResultsReport r = run_experiment(experiment_config_from_json(nlohmann::json::parse(kFewShotConfig)));
  if (!r.complete) return {false, "a run failed"};
  const double prompt = mean_of(r, "prompt", "acc"), sup = mean_of(r, "supervised", "acc");
  int close = 0;
  std::string per_seed;
  for (const auto& [seed, fp] : r.backbone_fingerprints) {
    const double a = run_metric(r, seed, "prompt"), b = run_metric(r, seed, "pretrain_finetune");
    close += a >= b - kFinetuneMargin;
    per_seed += fmt::format(" {:.2f}/{:.2f}", a, b);
  }
  const bool ok = prompt > sup && close >= kFinetuneSeedsNeeded;
  return {ok, fmt::format("mean acc prompt {:.2f} vs supervised {:.2f} (pretrain_finetune {:.2f}); within {:.0f} "
                          "point of pretrain_finetune on {}/5 seeds (need {}), prompt/finetune per seed:{}",
                          prompt, sup, mean_of(r, "pretrain_finetune", "acc"), kFinetuneMargin, close,
                          kFinetuneSeedsNeeded, per_seed)};
}

Outcome criterion_8() {
  const ResultsReport r = transfer_experiment(experiment_config_from_json(nlohmann::json::parse(kTransferConfig)));
  if (!r.complete) return {false, "a run failed"};
  const double prompt = mean_of(r, "prompt", "acc"), fine = mean_of(r, "fine_tune", "acc"),
               hard = mean_of(r, "hard", "acc");
  return {prompt > fine && fine > hard,
          fmt::format("mean acc over 5 seeds: prompt {:.2f}, fine_tune {:.2f}, hard {:.2f}", prompt, fine, hard)};
}

// ---------------------------------------------------------------------------
// 9: meta-initialisation

Outcome criterion_9() {
  GeneratorSpec spec;
  spec.level = "node";
  spec.num_classes = 2;
  spec.nodes_per_class = 30;
  spec.feature_dim = 8;
  spec.feature_separation = 1.0;
  auto task_dataset = [&](std::uint64_t generator_seed) {
    Rng rng(derive_seed(9, generator_seed));
    return reformulate_task(synthesize_dataset(spec, rng), TaskKind::node, 1, 10);
  };

  const Dataset corpus = task_dataset(1000);
  Rng init(91);
  PretrainConfig pc;
  pc.epochs = 20;
  pc.batch_size = 16;
  pc.learning_rate = 0.01;
  pc.seed = 92;
  BackboneModel frozen = pretrain(corpus, init_backbone(8, 16, 2, Activation::relu, Readout::mean, init), pc).model;
  frozen.freeze();

  std::vector<TaskEpisode> train, held_out;
  for (int i = 0; i < kMetaTrainTasks + kMetaHeldOut; ++i) {
    Rng rng(derive_seed(93, static_cast<std::uint64_t>(i)));
    TaskEpisode ep = sample_few_shot(task_dataset(static_cast<std::uint64_t>(i)), 5, 5, rng);
    (i < kMetaTrainTasks ? train : held_out).push_back(std::move(ep));
  }

  Rng prng(94);
  const PromptGraph fresh = init_prompt(5, 8, StructureMode::learnable, InsertMode::weighted_feature_add, 0.5, prng);
  const TaskHead fresh_head = init_head(HeadKind::classify, 16, 2, LabelMode::multiclass_softmax, prng);
  MetaConfig mc;  // 5 inner steps at 0.01, Adam 0.001 outer, batch 4, 100 outer steps
  mc.seed = 95;
  const MetaResult meta = meta_train(fresh, fresh_head, TaskSampler(train), frozen, mc);

  int wins = 0;
  double meta_mean = 0.0, fresh_mean = 0.0;
  for (const TaskEpisode& ep : held_out) {
    const double a = adapted_query_loss(meta.prompt, meta.head, ep, frozen, kAdaptSteps, mc.inner_lr);
    const double b = adapted_query_loss(fresh, fresh_head, ep, frozen, kAdaptSteps, mc.inner_lr);
    wins += a < b;
    meta_mean += a / kMetaHeldOut;
    fresh_mean += b / kMetaHeldOut;
  }
  const int needed = static_cast<int>(std::ceil(kMetaShare * kMetaHeldOut));
  return {wins >= needed, fmt::format("meta init better on {}/{} held-out tasks (need {}); mean query loss after {} "
                                      "steps: meta {:.4f}, fresh {:.4f}",
                                      wins, kMetaHeldOut, needed, kAdaptSteps, meta_mean, fresh_mean)};
}

// ---------------------------------------------------------------------------
// 10: determinism

Outcome criterion_10() {
  const nlohmann::json j = nlohmann::json::parse(R"({
    "name": "determinism",
    "dataset": {"synthetic": {"level": "node", "num_classes": 2, "nodes_per_class": 40, "feature_dim": 4,
                              "p_intra": 0.2, "p_inter": 0.02}, "seed": 10},
    "task": {"level": "node", "shots": 8, "query": 8, "hops": 1, "max_nodes": 10},
    "seeds": [0, 1],
    "schemes": ["supervised", "pretrain_finetune", "prompt", "meta_prompt"],
    "backbone": {"hidden_dim": 16},
    "pretrain": {"epochs": 3, "batch_size": 16, "max_graphs": 40},
    "prompt": {"num_tokens": 3},
    "tune": {"steps": 30},
    "finetune": {"steps": 30},
    "meta": {"outer_steps": 5, "tasks": 6, "shots": 3, "query": 3, "meta_batch": 2}
  })");
  const auto root = std::filesystem::temp_directory_path() / "gp_acceptance_c10";
  std::filesystem::remove_all(root);
  std::vector<std::string> bytes;
  for (const char* run : {"a", "b"}) {
    write_report(run_experiment(experiment_config_from_json(j)), root / run);
    std::ifstream in(root / run / "report.json", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes.push_back(ss.str());
  }
  std::filesystem::remove_all(root);
  const bool ok = !bytes[0].empty() && bytes[0] == bytes[1];
  return {ok, fmt::format("two single-threaded runs wrote {} and {} bytes of report.json, {}", bytes[0].size(),
                          bytes[1].size(), ok ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level(LogLevel::quiet);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"error-bound ordering", criterion_1},   {"RED trend over token counts", criterion_2},
      {"gradient correctness", criterion_3},   {"oracle equivalence", criterion_4},
      {"insertion identities", criterion_5},   {"frozen-backbone immutability", criterion_6},
      {"few-shot node classification", criterion_7}, {"transfer ordering", criterion_8},
      {"meta-initialisation advantage", criterion_9}, {"determinism", criterion_10}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << fmt::format("criterion {:2d} {}: {} | {} [{:.1f}s]", number, o.pass ? "PASS" : "FAIL",
                             criteria[i].first, o.detail, s)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
