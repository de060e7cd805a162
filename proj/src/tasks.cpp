#include "graphprompt/tasks.hpp"

#include "graphprompt/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <cmath>
#include <set>

namespace gprompt {

namespace {

std::string prefix(const Dataset& d, std::size_t g) {
  return d.graphs.size() > 1 ? fmt::format("g{}/", g) : std::string();
}

}  // namespace

namespace {

// Most frequent non-negative label; ties go to the smallest label.
int majority_label(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int y : labels)
    if (y >= 0) ++counts[y];
  int best = -1, best_count = 0;
  for (const auto& [y, c] : counts) {
    if (c > best_count) {
      best = y;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

Dataset reformulate_task(const Dataset& dataset, TaskKind level, int hops, int max_nodes) {
  const bool node_labelled = dataset.task_kind == TaskKind::node || dataset.task_kind == TaskKind::edge;
  if (level == TaskKind::regression || (level == TaskKind::graph && !node_labelled)) return dataset;
  if (level != TaskKind::node && level != TaskKind::edge && level != TaskKind::graph) {
    throw ValidationError("reformulate_task: level must be node or edge, got " + to_string(level));
  }
  Dataset out;
  out.name = dataset.name + "/" + to_string(level);
  out.task_kind = level;
  out.feature_dim = dataset.feature_dim;
  out.multilabel = dataset.multilabel;
  int max_label = -1;

  for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
    const Graph& graph = dataset.graphs[g];
    if (level == TaskKind::node || level == TaskKind::graph) {
      if (!graph.has_node_labels()) continue;
      for (int v = 0; v < graph.node_count(); ++v) {
        int y = graph.node_labels()[static_cast<std::size_t>(v)];
        if (y < 0) continue;
        Graph sub = induced_graph(graph, v, hops, max_nodes);
        if (level == TaskKind::graph) y = majority_label(sub.node_labels());
        sub.set_graph_class(y);
        out.graphs.push_back(std::move(sub));
        out.instance_ids.push_back(prefix(dataset, g) + fmt::format("n{}", graph.original_id(v)));
        max_label = std::max(max_label, y);
      }
    } else {
      for (const auto& [e, y] : graph.edge_labels()) {
        if (y < 0) continue;
        Graph sub = induced_graph(graph, e, hops, max_nodes);
        sub.set_graph_class(y);
        out.graphs.push_back(std::move(sub));
        out.instance_ids.push_back(prefix(dataset, g) +
                                   fmt::format("e{}-{}", graph.original_id(e.u), graph.original_id(e.v)));
        max_label = std::max(max_label, y);
      }
    }
  }
  if (out.graphs.empty()) {
    throw ValidationError("dataset '" + dataset.name + "' has no " + to_string(level) + " labels");
  }
  out.num_classes = level != TaskKind::edge ? std::max(dataset.num_classes, max_label + 1) : max_label + 1;
  out.num_classes = std::max(out.num_classes, 2);
  return out;
}

namespace {

Example example_at(const Dataset& d, std::size_t i) {
  Example ex;
  ex.graph = d.graphs[i];
  ex.label = ex.graph.graph_class().value_or(-1);
  ex.target = ex.graph.graph_targets();
  ex.target_id = i < d.instance_ids.size() ? d.instance_ids[i] : fmt::format("i{}", i);
  ex.source_index = static_cast<int>(i);
  return ex;
}

}  // namespace

std::vector<Example> to_examples(const Dataset& task_dataset) {
  std::vector<Example> out;
  out.reserve(task_dataset.graphs.size());
  for (std::size_t i = 0; i < task_dataset.graphs.size(); ++i) out.push_back(example_at(task_dataset, i));
  return out;
}

TaskEpisode sample_few_shot(const Dataset& task_dataset, int shots_per_class, int query_per_class, Rng& rng) {
  if (shots_per_class < 1 || query_per_class < 0) throw ValidationError("shots must be >= 1 and query >= 0");
  const int classes = task_dataset.num_classes;
  if (classes < 2) throw ValidationError("few-shot sampling needs at least 2 classes");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < task_dataset.graphs.size(); ++i) {
    const auto y = task_dataset.graphs[i].graph_class();
    if (!y) continue;
    if (*y < 0 || *y >= classes) throw ValidationError(fmt::format("instance {} has label {} outside [0, {})", i, *y, classes));
    by_class[static_cast<std::size_t>(*y)].push_back(i);
  }

  TaskEpisode ep;
  ep.level = task_dataset.task_kind;
  ep.class_count = classes;
  ep.dataset_name = task_dataset.name;
  const std::size_t need = static_cast<std::size_t>(shots_per_class + query_per_class);
  for (int c = 0; c < classes; ++c) {
    const auto& pool = by_class[static_cast<std::size_t>(c)];
    if (pool.size() < need) {
      throw ValidationError(fmt::format("class {} has {} instances; {} shots + {} query need {}", c, pool.size(),
                                        shots_per_class, query_per_class, need));
    }
    const auto picked = rng.sample_without_replacement(pool.size(), need);
    for (std::size_t k = 0; k < need; ++k) {
      Example ex = example_at(task_dataset, pool[picked[k]]);
      (k < static_cast<std::size_t>(shots_per_class) ? ep.support : ep.query).push_back(std::move(ex));
    }
  }
  return ep;
}

TaskEpisode sample_regression(const Dataset& task_dataset, int support, int query, Rng& rng) {
  if (support < 1 || query < 0) throw ValidationError("support must be >= 1 and query >= 0");
  const std::size_t n = task_dataset.graphs.size();
  const std::size_t need = static_cast<std::size_t>(support + query);
  if (n < need) throw ValidationError(fmt::format("regression split needs {} instances, dataset has {}", need, n));
  std::size_t arity = 0;
  for (const Graph& g : task_dataset.graphs) {
    if (g.graph_targets().empty()) throw ValidationError("regression instance without targets");
    if (arity == 0) arity = g.graph_targets().size();
    if (g.graph_targets().size() != arity) throw ValidationError("regression target arity varies across instances");
  }
  TaskEpisode ep;
  ep.level = TaskKind::regression;
  ep.class_count = static_cast<int>(arity);
  ep.dataset_name = task_dataset.name;
  const auto picked = rng.sample_without_replacement(n, need);
  for (std::size_t k = 0; k < need; ++k) {
    (k < static_cast<std::size_t>(support) ? ep.support : ep.query).push_back(example_at(task_dataset, picked[k]));
  }
  return ep;
}

void shuffle_episode(TaskEpisode& episode, Rng& rng) {
  rng.shuffle(episode.support);
  rng.shuffle(episode.query);
}

nlohmann::json episode_manifest(const TaskEpisode& episode) {
  auto side = [](const std::vector<Example>& xs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Example& ex : xs) {
      nlohmann::json item{{"index", ex.source_index}, {"target", ex.target_id}};
      if (ex.label >= 0) item["label"] = ex.label;
      if (ex.group >= 0) item["group"] = ex.group;
      arr.push_back(std::move(item));
    }
    return arr;
  };
  return nlohmann::json{{"dataset", episode.dataset_name},
                        {"level", to_string(episode.level)},
                        {"seed", episode.seed},
                        {"class_count", episode.class_count},
                        {"support", side(episode.support)},
                        {"query", side(episode.query)}};
}

TaskEpisode materialize_episode(const Dataset& task_dataset, const nlohmann::json& manifest) {
  TaskEpisode ep;
  try {
    ep.level = parse_task_kind(manifest.at("level").get<std::string>());
    ep.seed = manifest.at("seed").get<std::uint64_t>();
    ep.class_count = manifest.at("class_count").get<int>();
    ep.dataset_name = manifest.at("dataset").get<std::string>();
    for (const char* side : {"support", "query"}) {
      for (const auto& item : manifest.at(side)) {
        const int index = item.at("index").get<int>();
        if (index < 0 || static_cast<std::size_t>(index) >= task_dataset.graphs.size()) {
          throw SchemaError(fmt::format("manifest index {} outside the task dataset", index));
        }
        Example ex = example_at(task_dataset, static_cast<std::size_t>(index));
        if (ex.target_id != item.at("target").get<std::string>()) {
          throw SchemaError(fmt::format("manifest target '{}' does not match instance {} ('{}')",
                                        item.at("target").get<std::string>(), index, ex.target_id));
        }
        if (item.contains("group")) ex.group = item.at("group").get<int>();
        (std::string(side) == "support" ? ep.support : ep.query).push_back(std::move(ex));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed episode manifest: ") + e.what());
  }
  return ep;
}

TargetScaler TargetScaler::fit(const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("cannot fit a target scaler on no examples");
  const std::size_t k = examples.front().target.size();
  TargetScaler s;
  s.mean.assign(k, 0.0);
  s.scale.assign(k, 0.0);
  for (const Example& ex : examples) {
    if (ex.target.size() != k) throw ValidationError("regression target arity mismatch");
    for (std::size_t j = 0; j < k; ++j) s.mean[j] += ex.target[j];
  }
  for (double& m : s.mean) m /= static_cast<double>(examples.size());
  for (const Example& ex : examples)
    for (std::size_t j = 0; j < k; ++j) s.scale[j] += (ex.target[j] - s.mean[j]) * (ex.target[j] - s.mean[j]);
  for (double& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(examples.size()));
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

void TargetScaler::apply(std::vector<Example>& examples) const {
  for (Example& ex : examples) {
    if (ex.target.size() != mean.size()) throw ValidationError("regression target arity mismatch");
    for (std::size_t j = 0; j < mean.size(); ++j) ex.target[j] = (ex.target[j] - mean[j]) / scale[j];
  }
}

std::vector<double> TargetScaler::invert(const std::vector<double>& scaled) const {
  std::vector<double> out(scaled.size());
  for (std::size_t j = 0; j < scaled.size(); ++j) out[j] = scaled[j] * scale[j] + mean[j];
  return out;
}

LinkSplit link_prediction_split(const Graph& graph, double message_ratio, double train_ratio,
                                int negatives_per_train_positive, int negatives_per_test_positive, Rng& rng) {
  if (!(message_ratio > 0.0) || !(train_ratio > 0.0) || message_ratio + train_ratio > 1.0) {
    throw ValidationError("link split ratios must be positive with message + train <= 1");
  }
  if (negatives_per_train_positive < 0 || negatives_per_test_positive < 0) {
    throw ValidationError("negative counts must be >= 0");
  }
  const std::size_t m = graph.edge_count();
  const int n_msg = ratio_count(message_ratio, m);
  const int n_train = ratio_count(train_ratio, m);
  const int n_test = static_cast<int>(m) - n_msg - n_train;
  if (n_msg < 1 || n_train < 1 || n_test < 1) {
    throw ValidationError(fmt::format("graph with {} edges is too small for a {}/{} link split", m, message_ratio,
                                      train_ratio));
  }
  const long long n = graph.node_count();
  const long long non_edges = n * (n - 1) / 2 - static_cast<long long>(m);
  if (non_edges < std::max(negatives_per_train_positive, negatives_per_test_positive)) {
    throw ValidationError(fmt::format("graph has only {} non-adjacent pairs for negative sampling", non_edges));
  }

  std::vector<Edge> edges = graph.edges();
  rng.shuffle(edges);

  LinkSplit split;
  split.message_graph = Graph(graph.features(), std::vector<Edge>(edges.begin(), edges.begin() + n_msg));
  if (graph.has_node_labels()) split.message_graph.set_node_labels(graph.node_labels());
  if (!graph.node_ids().empty()) split.message_graph.set_node_ids(graph.node_ids());

  auto add_with_negatives = [&](std::vector<LinkPair>& out, int begin, int end, int negatives) {
    for (int i = begin; i < end; ++i) {
      const int group = i - begin;
      out.push_back({edges[static_cast<std::size_t>(i)], 1, group});
      std::set<Edge> drawn;
      while (static_cast<int>(drawn.size()) < negatives) {
        const int a = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
        const int b = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
        if (a == b || graph.has_edge(a, b)) continue;
        const Edge e = make_edge(a, b);
        if (drawn.insert(e).second) out.push_back({e, 0, group});
      }
    }
  };
  add_with_negatives(split.train, n_msg, n_msg + n_train, negatives_per_train_positive);
  add_with_negatives(split.test, n_msg + n_train, static_cast<int>(m), negatives_per_test_positive);
  return split;
}

std::vector<Example> link_examples(const LinkSplit& split, const std::vector<LinkPair>& pairs, int hops,
                                   int max_nodes) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const LinkPair& p = pairs[i];
    Example ex;
    ex.graph = neighborhood_graph(split.message_graph, {p.pair.u, p.pair.v}, hops, max_nodes);
    ex.label = p.label;
    ex.group = p.group;
    ex.target_id = fmt::format("e{}-{}", split.message_graph.original_id(p.pair.u),
                               split.message_graph.original_id(p.pair.v));
    ex.source_index = static_cast<int>(i);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace gprompt
