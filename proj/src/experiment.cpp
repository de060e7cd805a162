#include "graphprompt/experiment.hpp"

#include "graphprompt/checkpoint.hpp"
#include "graphprompt/dataset_io.hpp"
#include "graphprompt/errors.hpp"
#include "graphprompt/tasks.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace gprompt {

Dataset resolve_dataset(const DatasetRef& ref) {
  if (ref.synthetic) {
    Rng rng(ref.seed);
    return synthesize_dataset(*ref.synthetic, rng);
  }
  return load_dataset(ref.path);
}

MetricMap report_metrics(const MetricMap& raw, TaskKind kind) {
  MetricMap out = raw;
  if (kind != TaskKind::regression) {
    for (auto& [name, value] : out) value *= 100.0;
  }
  return out;
}

MetricMap improvement_over_rest(const std::vector<SchemeSummary>& summaries, const std::string& prompt_scheme) {
  const SchemeSummary* ours = nullptr;
  std::vector<const SchemeSummary*> rest;
  for (const SchemeSummary& s : summaries) {
    if (s.scheme == prompt_scheme) {
      ours = &s;
    } else if (s.scheme != "prompt" && s.scheme != "meta_prompt") {
      rest.push_back(&s);
    }
  }
  if (!ours || rest.empty()) throw ValidationError("improvement needs the prompt row and at least one other row");
  MetricMap imp;
  for (const auto& [metric, value] : ours->mean) {
    const bool lower_is_better = metric == "mae" || metric == "mse";
    double total = 0.0;
    for (const SchemeSummary* r : rest) {
      const double diff = value - r->mean.at(metric);
      total += lower_is_better ? -diff : diff;
    }
    imp[metric] = total / static_cast<double>(rest.size());
  }
  return imp;
}

namespace {

// ---------------------------------------------------------------------------
// Task preparation

struct PreparedSeed {
  TaskEpisode episode;
  std::vector<Example> query_truth;  // regression: targets in original units
  std::optional<TargetScaler> scaler;
  std::vector<Graph> pretrain_corpus;
  nlohmann::json manifest;
};

HeadKind head_kind(TaskKind level) {
  if (level == TaskKind::link) return HeadKind::link_score;
  if (level == TaskKind::regression) return HeadKind::regress;
  return HeadKind::classify;
}

// Unlabelled graphs for self-supervised pre-training: the member graphs of a
// multi-graph corpus, otherwise one neighbourhood per node.
std::vector<Graph> corpus_of(const std::vector<Graph>& graphs, bool multi_graph, int hops, int max_nodes) {
  if (multi_graph) return graphs;
  std::vector<Graph> out;
  for (const Graph& g : graphs)
    for (int v = 0; v < g.node_count(); ++v) out.push_back(neighborhood_graph(g, {v}, hops, max_nodes));
  return out;
}

std::vector<Graph> cap_corpus(std::vector<Graph> corpus, int max_graphs, std::uint64_t seed) {
  if (max_graphs <= 0 || static_cast<int>(corpus.size()) <= max_graphs) return corpus;
  Rng rng(derive_seed(seed, "corpus"));
  std::vector<std::size_t> idx = rng.sample_without_replacement(corpus.size(), static_cast<std::size_t>(max_graphs));
  std::sort(idx.begin(), idx.end());
  std::vector<Graph> out;
  for (std::size_t i : idx) out.push_back(std::move(corpus[i]));
  return out;
}

bool is_multi_graph(const Dataset& d) { return d.task_kind == TaskKind::graph || d.task_kind == TaskKind::regression; }

nlohmann::json link_manifest(const std::vector<Example>& xs) {
  nlohmann::json out = nlohmann::json::array();
  for (const Example& ex : xs) out.push_back({{"pair", ex.target_id}, {"label", ex.label}, {"group", ex.group}});
  return out;
}

PreparedSeed prepare_seed(const ExperimentConfig& c, const Dataset& data, const Dataset* task_dataset,
                          std::uint64_t seed) {
  PreparedSeed p;
  Rng rng(derive_seed(seed, "episode"));
  const TaskSettings& t = c.task;
  if (t.level == TaskKind::link) {
    if (data.graphs.size() != 1) throw ConfigError("link prediction needs a single-graph dataset");
    const LinkSplit split = link_prediction_split(data.graphs[0], t.message_ratio, t.train_ratio, t.train_negatives,
                                                  t.test_negatives, rng);
    auto take = [&](const std::vector<LinkPair>& pairs, int positives, const char* what) {
      std::vector<int> groups;
      for (const LinkPair& lp : pairs)
        if (lp.label == 1) groups.push_back(lp.group);
      if (static_cast<int>(groups.size()) < positives) {
        throw ValidationError(fmt::format("link split has {} {} positives, {} requested", groups.size(), what, positives));
      }
      const auto chosen = rng.sample_without_replacement(groups.size(), static_cast<std::size_t>(positives));
      std::set<int> keep;
      for (std::size_t i : chosen) keep.insert(groups[i]);
      std::vector<LinkPair> out;
      for (const LinkPair& lp : pairs)
        if (keep.count(lp.group)) out.push_back(lp);
      return out;
    };
    p.episode.level = TaskKind::link;
    p.episode.class_count = 1;
    p.episode.support = link_examples(split, take(split.train, t.shots, "training"), t.hops, t.max_nodes);
    p.episode.query = link_examples(split, take(split.test, t.query, "test"), t.hops, t.max_nodes);
    p.query_truth = p.episode.query;
    p.pretrain_corpus = corpus_of({split.message_graph}, false, t.hops, t.max_nodes);
    p.manifest = {{"dataset", data.name},
                  {"level", "link"},
                  {"seed", seed},
                  {"support", link_manifest(p.episode.support)},
                  {"query", link_manifest(p.episode.query)}};
  } else {
    if (t.level == TaskKind::regression) {
      p.episode = sample_regression(*task_dataset, t.shots, t.query, rng);
      p.query_truth = p.episode.query;
      p.scaler = TargetScaler::fit(p.episode.support);
      p.scaler->apply(p.episode.support);
      p.scaler->apply(p.episode.query);
    } else {
      p.episode = sample_few_shot(*task_dataset, t.shots, t.query, rng);
      p.query_truth = p.episode.query;
    }
    p.episode.seed = seed;
    p.manifest = episode_manifest(p.episode);
    p.pretrain_corpus = corpus_of(data.graphs, is_multi_graph(data), t.hops, t.max_nodes);
  }
  p.pretrain_corpus = cap_corpus(std::move(p.pretrain_corpus), c.pretrain_max_graphs, seed);
  return p;
}

// ---------------------------------------------------------------------------
// Models

PretrainResult pretrain_corpus(const ExperimentConfig& c, int input_dim, const std::vector<Graph>& corpus,
                               std::uint64_t seed, const std::string& name, const EpochCallback& on_epoch = {}) {
  BackboneConfig bc = c.backbone;
  bc.input_dim = input_dim;
  Rng init(derive_seed(seed, "backbone"));
  const BackboneModel start = init_backbone(bc, init);
  PretrainConfig pc = c.pretrain;
  pc.seed = derive_seed(seed, "pretrain");
  Dataset corpus_ds;
  corpus_ds.name = name + "/pretrain";
  corpus_ds.task_kind = TaskKind::graph;
  corpus_ds.feature_dim = input_dim;
  corpus_ds.graphs = corpus;
  return pretrain(corpus_ds, start, pc, on_epoch);
}

BackboneModel pretrained_backbone(const ExperimentConfig& c, int input_dim, const std::vector<Graph>& corpus,
                                  std::uint64_t seed, const std::string& name) {
  if (!c.backbone_checkpoint.empty()) {
    BackboneModel m = load_backbone(c.backbone_checkpoint);
    if (m.config().input_dim != input_dim) {
      throw ConfigError(fmt::format("backbone checkpoint expects {} features, data have {}", m.config().input_dim,
                                    input_dim));
    }
    m.unfreeze();
    return m;
  }
  return pretrain_corpus(c, input_dim, corpus, seed, name).model;
}

int head_outputs(const ExperimentConfig& c, const Dataset* task_dataset, const TaskEpisode& ep) {
  if (c.task.level == TaskKind::link) return 1;
  if (c.task.level == TaskKind::regression) {
    if (ep.support.empty() || ep.support[0].target.empty()) throw ValidationError("regression examples lack targets");
    return static_cast<int>(ep.support[0].target.size());
  }
  return task_dataset->num_classes;
}

TaskHead fresh_head(const ExperimentConfig& c, int hidden, int outputs, bool multilabel, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "head"));
  return init_head(head_kind(c.task.level), hidden, outputs,
                   multilabel ? LabelMode::multilabel_sigmoid : LabelMode::multiclass_softmax, rng);
}

PromptGraph fresh_prompt(const PromptSettings& s, int d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "prompt"));
  return init_prompt(s.num_tokens, d, s.structure_mode, s.insert_mode, s.delta, rng);
}

MetricMap evaluate(const PromptedModel& model, const PreparedSeed& p, TaskKind level,
                   const std::vector<std::string>& wanted) {
  Matrix pred = predict(model, p.episode.query);
  if (p.scaler) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const RowVector r = pred.row(i);
      const std::vector<double> back = p.scaler->invert(std::vector<double>(r.data(), r.data() + r.size()));
      for (Eigen::Index j = 0; j < pred.cols(); ++j) pred(i, j) = back[static_cast<std::size_t>(j)];
    }
  }
  MetricMap all = report_metrics(compute_metrics(pred, p.query_truth, level), level);
  if (wanted.empty()) return all;
  MetricMap out;
  for (const std::string& m : wanted) out[m] = all.at(m);
  return out;
}

// Meta-training episodes are drawn from the support set only, so the scheme sees no
// labels beyond the few-shot budget.
std::vector<TaskEpisode> meta_episodes(const ExperimentConfig& c, const TaskEpisode& target, int classes,
                                       std::uint64_t seed) {
  Dataset pool;
  pool.name = target.dataset_name + "/support";
  pool.task_kind = TaskKind::graph;
  pool.num_classes = classes;
  for (const Example& ex : target.support) {
    pool.graphs.push_back(ex.graph);
    pool.graphs.back().set_graph_class(ex.label);
    pool.instance_ids.push_back(ex.target_id);
  }
  pool.feature_dim = pool.graphs.empty() ? 0 : pool.graphs[0].feature_dim();
  Rng rng(derive_seed(seed, "meta_tasks"));
  std::vector<TaskEpisode> out;
  for (int i = 0; i < c.meta.tasks; ++i) {
    TaskEpisode ep = sample_few_shot(pool, c.meta.shots, c.meta.query, rng);
    ep.level = target.level;
    out.push_back(std::move(ep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeds

struct SeedOutcome {
  std::vector<RunRecord> runs;
  nlohmann::json manifest;
  std::string fingerprint;
};

template <typename Job>
std::vector<SeedOutcome> run_seeds(const std::vector<std::uint64_t>& seeds, int threads, const Job& job) {
  std::vector<SeedOutcome> out(seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        out[i] = job(seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(seeds.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

class EventSink {
 public:
  explicit EventSink(const ProgressCallback& cb) : cb_(cb) {}
  void operator()(const std::string& event, const nlohmann::json& detail) {
    if (!cb_) return;
    std::lock_guard lock(mutex_);
    cb_(event, detail);
  }

 private:
  const ProgressCallback& cb_;
  std::mutex mutex_;
};

ResultsReport assemble(const ExperimentConfig& c, const std::string& kind, const std::string& task,
                       const std::vector<std::string>& schemes, std::vector<SeedOutcome> outcomes,
                       const std::string& prompt_row) {
  ResultsReport r;
  r.kind = kind;
  r.name = c.name;
  r.config = to_json(c);
  r.config_hash = config_hash(c);
  r.task = task;
  r.schemes = schemes;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    for (RunRecord& run : outcomes[i].runs) {
      if (!run.failure.empty()) r.complete = false;
      r.runs.push_back(std::move(run));
    }
    r.manifests.push_back(std::move(outcomes[i].manifest));
    r.backbone_fingerprints.push_back({c.seeds[i], outcomes[i].fingerprint});
  }
  std::set<std::string> names;
  for (const RunRecord& run : r.runs)
    for (const auto& [m, v] : run.metrics) names.insert(m);
  r.metric_names.assign(names.begin(), names.end());

  for (const std::string& s : schemes) {
    SchemeSummary sum;
    sum.scheme = s;
    std::vector<const RunRecord*> done;
    for (const RunRecord& run : r.runs)
      if (run.scheme == s && run.failure.empty()) done.push_back(&run);
    sum.completed = static_cast<int>(done.size());
    for (const std::string& m : r.metric_names) {
      if (done.empty()) continue;
      double mean = 0.0;
      for (const RunRecord* run : done) mean += run->metrics.at(m) / static_cast<double>(done.size());
      double var = 0.0;
      for (const RunRecord* run : done) var += std::pow(run->metrics.at(m) - mean, 2);
      sum.mean[m] = mean;
      sum.std[m] = done.size() > 1 ? std::sqrt(var / static_cast<double>(done.size() - 1)) : 0.0;
    }
    r.summaries.push_back(std::move(sum));
  }

  const auto has_prompt = std::find(schemes.begin(), schemes.end(), prompt_row) != schemes.end();
  const bool others = std::any_of(schemes.begin(), schemes.end(),
                                  [](const std::string& s) { return s != "prompt" && s != "meta_prompt"; });
  if (has_prompt && others) {
    const bool all_complete = std::all_of(r.summaries.begin(), r.summaries.end(),
                                          [](const SchemeSummary& s) { return s.completed > 0; });
    if (all_complete) r.improvement = improvement_over_rest(r.summaries, prompt_row);
  }
  return r;
}

}  // namespace

ResultsReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  const Dataset data = resolve_dataset(config.dataset);
  const TaskKind level = config.task.level;
  std::optional<Dataset> task_dataset;
  if (level != TaskKind::link) {
    try {
      task_dataset = reformulate_task(data, level, config.task.hops, config.task.max_nodes);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("task.level: ") + e.what());
    }
    if (level == TaskKind::regression && task_dataset->graphs.empty()) throw ConfigError("no regression graphs");
  }
  EventSink sink(options.on_event);

  std::vector<std::string> scheme_names;
  for (Scheme s : config.schemes) scheme_names.push_back(to_string(s));

  auto job = [&](std::uint64_t seed) {
    SeedOutcome out;
    const PreparedSeed p = prepare_seed(config, data, task_dataset ? &*task_dataset : nullptr, seed);
    out.manifest = p.manifest;
    const int d = data.feature_dim;
    const int outputs = head_outputs(config, task_dataset ? &*task_dataset : nullptr, p.episode);
    const bool multilabel = task_dataset && task_dataset->multilabel;

    const bool needs_pretrained = std::any_of(config.schemes.begin(), config.schemes.end(),
                                              [](Scheme s) { return s != Scheme::supervised; });
    std::optional<BackboneModel> pretrained;
    if (needs_pretrained) {
      pretrained = pretrained_backbone(config, d, p.pretrain_corpus, seed, data.name);
      sink("pretrained", {{"seed", seed}, {"fingerprint", hex64(pretrained->fingerprint())}});
    }
    const int hidden = pretrained ? pretrained->config().hidden_dim : config.backbone.hidden_dim;
    std::optional<BackboneModel> frozen = pretrained;
    if (frozen) frozen->freeze();
    const std::uint64_t frozen_print = frozen ? frozen->fingerprint() : 0;

    for (Scheme scheme : config.schemes) {
      RunRecord run;
      run.seed = seed;
      run.scheme = to_string(scheme);
      try {
        const TaskHead head = fresh_head(config, hidden, outputs, multilabel, seed);
        switch (scheme) {
          case Scheme::supervised: {
            BackboneConfig bc = config.backbone;
            bc.input_dim = d;
            bc.hidden_dim = hidden;
            Rng init(derive_seed(seed, "supervised"));
            const FitResult r = fit(PromptedModel{init_backbone(bc, init), std::nullopt, head}, kBackboneAndHead,
                                    p.episode.support, config.finetune);
            run.metrics = evaluate(r.model, p, level, config.metrics);
            break;
          }
          case Scheme::pretrain_finetune: {
            const FitResult r = fit(PromptedModel{*pretrained, std::nullopt, head}, kBackboneAndHead,
                                    p.episode.support, config.finetune);
            run.metrics = evaluate(r.model, p, level, config.metrics);
            break;
          }
          case Scheme::prompt: {
            const TuneResult r =
                tune_prompt(fresh_prompt(config.prompt, d, seed), head, std::span(&p.episode, 1), *frozen, config.tune);
            run.metrics = evaluate(PromptedModel{*frozen, r.prompt, r.head}, p, level, config.metrics);
            break;
          }
          case Scheme::meta_prompt: {
            MetaConfig mc = config.meta.config;
            mc.seed = derive_seed(seed, "meta");
            const auto tasks = meta_episodes(config, p.episode, outputs, seed);
            const MetaResult meta = meta_train(fresh_prompt(config.prompt, d, seed), head, TaskSampler(tasks), *frozen,
                                               mc, [&](int step, double loss) {
                                                 sink("meta_step", {{"seed", seed}, {"outer_step", step},
                                                                    {"mean_query_loss", loss}});
                                               });
            const TuneResult r = tune_prompt(meta.prompt, meta.head, std::span(&p.episode, 1), *frozen, config.tune);
            run.metrics = evaluate(PromptedModel{*frozen, r.prompt, r.head}, p, level, config.metrics);
            break;
          }
        }
      } catch (const NumericError& e) {
        run.failure = e.what();
        run.metrics.clear();
      }
      if (frozen && frozen->fingerprint() != frozen_print) {
        throw ContractError("the frozen backbone changed during " + run.scheme);
      }
      sink("run", {{"seed", seed}, {"scheme", run.scheme}, {"failed", !run.failure.empty()}});
      out.runs.push_back(std::move(run));
    }
    out.fingerprint = frozen ? hex64(frozen_print) : "";
    return out;
  };

  ResultsReport report = assemble(config, "experiment", to_string(level), scheme_names,
                                  run_seeds(config.seeds, options.threads, job), "prompt");
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

struct SeedSetup {
  Dataset data;
  std::optional<Dataset> task_dataset;
};

SeedSetup setup(const ExperimentConfig& config) {
  validate(config);
  SeedSetup s{resolve_dataset(config.dataset), std::nullopt};
  if (config.task.level != TaskKind::link) {
    try {
      s.task_dataset = reformulate_task(s.data, config.task.level, config.task.hops, config.task.max_nodes);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("task.level: ") + e.what());
    }
  }
  return s;
}

}  // namespace

PretrainResult pretrain_for_seed(const ExperimentConfig& config, std::uint64_t seed, const EpochCallback& on_epoch) {
  const SeedSetup s = setup(config);
  const PreparedSeed p = prepare_seed(config, s.data, s.task_dataset ? &*s.task_dataset : nullptr, seed);
  return pretrain_corpus(config, s.data.feature_dim, p.pretrain_corpus, seed, s.data.name, on_epoch);
}

PromptArtifacts prompt_for_seed(const ExperimentConfig& config, std::uint64_t seed, bool meta_init,
                                const MetaStepCallback& on_meta_step) {
  const SeedSetup s = setup(config);
  if (meta_init && (config.task.level == TaskKind::link || config.task.level == TaskKind::regression)) {
    throw ConfigError("meta-training is only defined for node, edge and graph classification");
  }
  const Dataset* task_dataset = s.task_dataset ? &*s.task_dataset : nullptr;
  const PreparedSeed p = prepare_seed(config, s.data, task_dataset, seed);
  const int d = s.data.feature_dim;
  BackboneModel frozen = pretrained_backbone(config, d, p.pretrain_corpus, seed, s.data.name);
  frozen.freeze();
  const std::uint64_t print = frozen.fingerprint();
  const int outputs = head_outputs(config, task_dataset, p.episode);
  const TaskHead head =
      fresh_head(config, frozen.config().hidden_dim, outputs, task_dataset && task_dataset->multilabel, seed);

  std::optional<MetaResult> meta;
  PromptGraph start = fresh_prompt(config.prompt, d, seed);
  TaskHead start_head = head;
  if (meta_init) {
    MetaConfig mc = config.meta.config;
    mc.seed = derive_seed(seed, "meta");
    meta = meta_train(start, head, TaskSampler(meta_episodes(config, p.episode, outputs, seed)), frozen, mc,
                      on_meta_step);
    start = meta->prompt;
    start_head = meta->head;
  }
  TuneResult tuned = tune_prompt(start, start_head, std::span(&p.episode, 1), frozen, config.tune);
  MetricMap metrics = evaluate(PromptedModel{frozen, tuned.prompt, tuned.head}, p, config.task.level, config.metrics);
  if (frozen.fingerprint() != print) throw ContractError("the frozen backbone changed during prompt tuning");
  return {std::move(frozen), std::move(meta), std::move(tuned), p.manifest, std::move(metrics)};
}

ErrorTable run_error_bound(const ExperimentConfig& config, std::uint64_t seed, int threads) {
  validate(config);
  const Dataset data = resolve_dataset(config.dataset);
  const ErrorBoundSettings& e = config.error_bound;
  const std::vector<Graph> graphs =
      cap_corpus(corpus_of(data.graphs, is_multi_graph(data), config.task.hops, config.task.max_nodes),
                 e.max_graphs, seed);
  BackboneModel frozen = pretrained_backbone(config, data.feature_dim, graphs, seed, data.name);
  frozen.freeze();
  const std::uint64_t print = frozen.fingerprint();
  ImitationConfig ic = e.imitation;
  ic.seed = derive_seed(seed, "imitation");
  ic.threads = threads;
  ErrorTable table =
      error_reduction_table(frozen, graphs, e.token_counts, e.transformations, e.ratio, e.transformation_seed, ic);
  if (frozen.fingerprint() != print) throw ContractError("the frozen backbone changed in the error-bound lab");
  return table;
}

ResultsReport transfer_experiment(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  if (!config.transfer) throw ConfigError("transfer: missing section");
  const TransferSettings& ts = *config.transfer;
  const auto start = std::chrono::steady_clock::now();
  const Dataset target_data = resolve_dataset(config.dataset);
  const Dataset source_data = ts.source_dataset ? resolve_dataset(*ts.source_dataset) : target_data;
  if (source_data.feature_dim != target_data.feature_dim) {
    throw DomainTransferError(fmt::format("source features have {} dimensions, target features {}; cross-domain "
                                          "feature alignment is not supported",
                                          source_data.feature_dim, target_data.feature_dim));
  }
  const int hops = config.task.hops, max_nodes = config.task.max_nodes;
  Dataset source_task, target_task;
  try {
    source_task = reformulate_task(source_data, ts.source_level, hops, max_nodes);
    target_task = reformulate_task(target_data, ts.target_level, hops, max_nodes);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("transfer: ") + e.what());
  }
  const bool same_classes = source_task.num_classes == target_task.num_classes;
  if (!same_classes && std::find(ts.schemes.begin(), ts.schemes.end(), TransferScheme::hard) != ts.schemes.end()) {
    throw ConfigError(fmt::format("transfer: hard transfer needs equal class counts (source {}, target {})",
                                  source_task.num_classes, target_task.num_classes));
  }
  EventSink sink(options.on_event);
  const int d = target_data.feature_dim;

  std::vector<std::string> scheme_names;
  for (TransferScheme s : ts.schemes) scheme_names.push_back(to_string(s));

  ExperimentConfig target_view = config;
  target_view.task.level = ts.target_level;

  auto job = [&](std::uint64_t seed) {
    SeedOutcome out;
    const PreparedSeed target = prepare_seed(target_view, target_data, &target_task, seed);
    Rng source_rng(derive_seed(seed, "source_episode"));
    const TaskEpisode source = sample_few_shot(source_task, config.task.shots, 0, source_rng);
    out.manifest = {{"source", episode_manifest(source)}, {"target", target.manifest}};

    const std::vector<Graph> corpus = cap_corpus(
        corpus_of(source_data.graphs, is_multi_graph(source_data), hops, max_nodes), config.pretrain_max_graphs, seed);
    const BackboneModel pretrained = pretrained_backbone(config, d, corpus, seed, source_data.name);
    BackboneModel frozen = pretrained;
    frozen.freeze();
    const std::uint64_t frozen_print = frozen.fingerprint();
    const int hidden = pretrained.config().hidden_dim;
    Rng head_rng(derive_seed(seed, "head"));
    const TaskHead source_head =
        init_head(HeadKind::classify, hidden, source_task.num_classes, LabelMode::multiclass_softmax, head_rng);
    Rng target_head_rng(derive_seed(seed, "target_head"));
    const TaskHead target_head =
        init_head(HeadKind::classify, hidden, target_task.num_classes, LabelMode::multiclass_softmax, target_head_rng);

    std::optional<FitResult> source_model;
    std::optional<TuneResult> source_prompt;
    for (TransferScheme scheme : ts.schemes) {
      RunRecord run;
      run.seed = seed;
      run.scheme = to_string(scheme);
      try {
        if (scheme != TransferScheme::prompt && !source_model) {
          source_model = fit(PromptedModel{pretrained, std::nullopt, source_head}, kBackboneAndHead, source.support,
                             config.finetune);
        }
        if (scheme == TransferScheme::prompt && !source_prompt) {
          source_prompt =
              tune_prompt(fresh_prompt(config.prompt, d, seed), source_head, std::span(&source, 1), frozen, config.tune);
        }
        switch (scheme) {
          case TransferScheme::hard:
            run.metrics = evaluate(source_model->model, target, ts.target_level, config.metrics);
            break;
          case TransferScheme::fine_tune: {
            PromptedModel start = source_model->model;
            if (!same_classes) start.head = target_head;
            const FitResult r = fit(start, kBackboneAndHead, target.episode.support, config.finetune);
            run.metrics = evaluate(r.model, target, ts.target_level, config.metrics);
            break;
          }
          case TransferScheme::prompt: {
            const TaskHead head = same_classes ? source_prompt->head : target_head;
            const TuneResult r =
                tune_prompt(source_prompt->prompt, head, std::span(&target.episode, 1), frozen, config.tune);
            run.metrics = evaluate(PromptedModel{frozen, r.prompt, r.head}, target, ts.target_level, config.metrics);
            break;
          }
        }
      } catch (const NumericError& e) {
        run.failure = e.what();
        run.metrics.clear();
      }
      if (frozen.fingerprint() != frozen_print) throw ContractError("the frozen backbone changed during transfer");
      sink("run", {{"seed", seed}, {"scheme", run.scheme}, {"failed", !run.failure.empty()}});
      out.runs.push_back(std::move(run));
    }
    out.fingerprint = hex64(frozen_print);
    return out;
  };

  ResultsReport report =
      assemble(config, "transfer", to_string(ts.source_level) + "->" + to_string(ts.target_level), scheme_names,
               run_seeds(config.seeds, options.threads, job), "prompt");
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace gprompt
