#include "graphprompt/graph.hpp"

#include "graphprompt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

namespace gprompt {

Edge make_edge(int a, int b) {
  if (a == b) throw ValidationError("self-loop on node " + std::to_string(a));
  return a < b ? Edge{a, b} : Edge{b, a};
}

Graph::Graph(Matrix features, const std::vector<Edge>& edges) : features_(std::move(features)) {
  const int n = node_count();
  edges_.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n) {
      throw ValidationError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                            ") has an endpoint outside [0, " + std::to_string(n) + ")");
    }
    edges_.push_back(make_edge(e.u, e.v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

void Graph::set_features(Matrix features) {
  if (features.rows() != features_.rows()) throw ValidationError("feature row count must equal node count");
  features_ = std::move(features);
}

bool Graph::has_edge(int a, int b) const {
  if (a == b) return false;
  const Edge e = a < b ? Edge{a, b} : Edge{b, a};
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

std::vector<std::vector<int>> Graph::adjacency_list() const {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(node_count()));
  for (const Edge& e : edges_) {
    adj[static_cast<std::size_t>(e.u)].push_back(e.v);
    adj[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

Matrix Graph::adjacency_matrix() const {
  Matrix a = Matrix::Zero(node_count(), node_count());
  for (const Edge& e : edges_) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

void Graph::set_node_labels(std::vector<int> labels) {
  if (!labels.empty() && static_cast<int>(labels.size()) != node_count()) {
    throw ValidationError("node label count must equal node count");
  }
  node_labels_ = std::move(labels);
}

void Graph::set_edge_labels(std::map<Edge, int> labels) {
  for (const auto& [e, label] : labels) {
    if (!has_edge(e.u, e.v)) {
      throw ValidationError("edge label for missing edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) + ")");
    }
  }
  edge_labels_ = std::move(labels);
}

void Graph::set_node_ids(std::vector<int> ids) {
  if (!ids.empty() && static_cast<int>(ids.size()) != node_count()) {
    throw ValidationError("node id count must equal node count");
  }
  node_ids_ = std::move(ids);
}

bool Graph::operator==(const Graph& other) const {
  return features_.rows() == other.features_.rows() && features_.cols() == other.features_.cols() &&
         features_ == other.features_ && edges_ == other.edges_ && node_labels_ == other.node_labels_ &&
         edge_labels_ == other.edge_labels_ && graph_class_ == other.graph_class_ &&
         graph_targets_ == other.graph_targets_ && node_ids_ == other.node_ids_;
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::node: return "node";
    case TaskKind::edge: return "edge";
    case TaskKind::graph: return "graph";
    case TaskKind::link: return "link";
    case TaskKind::regression: return "regression";
  }
  return "unknown";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "node") return TaskKind::node;
  if (s == "edge") return TaskKind::edge;
  if (s == "graph") return TaskKind::graph;
  if (s == "link") return TaskKind::link;
  if (s == "regression") return TaskKind::regression;
  throw ValidationError("unknown task kind '" + s + "'");
}

void validate_dataset(const Dataset& dataset) {
  auto check_label = [&](int label, const std::string& where) {
    if (label < 0 || (dataset.num_classes > 0 && label >= dataset.num_classes)) {
      throw ValidationError(where + " label " + std::to_string(label) + " outside [0, " +
                            std::to_string(dataset.num_classes) + ")");
    }
  };
  for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
    const Graph& graph = dataset.graphs[g];
    if (graph.feature_dim() != dataset.feature_dim) {
      throw ValidationError("graph " + std::to_string(g) + " has feature dimension " +
                            std::to_string(graph.feature_dim()) + ", expected " + std::to_string(dataset.feature_dim));
    }
    for (int label : graph.node_labels()) {
      if (label != -1) check_label(label, "node");
    }
    for (const auto& [e, label] : graph.edge_labels()) check_label(label, "edge");
    if (graph.graph_class()) check_label(*graph.graph_class(), "graph");
  }
}

Graph subgraph(const Graph& graph, const std::vector<int>& nodes) {
  const int n = graph.node_count();
  std::vector<int> position(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int v = nodes[i];
    if (v < 0 || v >= n) throw ValidationError("subgraph node " + std::to_string(v) + " out of range");
    if (position[static_cast<std::size_t>(v)] != -1) throw ValidationError("subgraph node listed twice");
    position[static_cast<std::size_t>(v)] = static_cast<int>(i);
  }

  Matrix features(static_cast<Eigen::Index>(nodes.size()), graph.feature_dim());
  std::vector<int> ids(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    features.row(static_cast<Eigen::Index>(i)) = graph.features().row(nodes[i]);
    ids[i] = graph.original_id(nodes[i]);
  }

  std::vector<Edge> edges;
  std::map<Edge, int> edge_labels;
  for (const Edge& e : graph.edges()) {
    const int a = position[static_cast<std::size_t>(e.u)];
    const int b = position[static_cast<std::size_t>(e.v)];
    if (a < 0 || b < 0) continue;
    const Edge mapped = make_edge(a, b);
    edges.push_back(mapped);
    if (auto it = graph.edge_labels().find(e); it != graph.edge_labels().end()) edge_labels[mapped] = it->second;
  }

  Graph out(std::move(features), edges);
  if (graph.has_node_labels()) {
    std::vector<int> labels(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) labels[i] = graph.node_labels()[static_cast<std::size_t>(nodes[i])];
    out.set_node_labels(std::move(labels));
  }
  out.set_edge_labels(std::move(edge_labels));
  out.set_node_ids(std::move(ids));
  return out;
}

Graph neighborhood_graph(const Graph& graph, const std::vector<int>& sources, int hops, int max_nodes) {
  const int n = graph.node_count();
  if (hops < 1) throw ValidationError("neighborhood_graph: hops must be >= 1");
  if (max_nodes < static_cast<int>(sources.size())) throw ValidationError("neighborhood_graph: max_nodes below seed count");
  for (int s : sources) {
    if (s < 0 || s >= n) throw ValidationError("neighborhood_graph: seed " + std::to_string(s) + " out of range");
  }
  const auto adj = graph.adjacency_list();
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::vector<int> order;
  std::deque<int> queue;
  for (int s : sources) {
    if (dist[static_cast<std::size_t>(s)] == -1) {
      dist[static_cast<std::size_t>(s)] = 0;
      order.push_back(s);
      queue.push_back(s);
    }
  }
  while (!queue.empty() && static_cast<int>(order.size()) < max_nodes) {
    const int v = queue.front();
    queue.pop_front();
    if (dist[static_cast<std::size_t>(v)] == hops) continue;
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (dist[static_cast<std::size_t>(w)] != -1) continue;
      dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
      order.push_back(w);
      queue.push_back(w);
      if (static_cast<int>(order.size()) >= max_nodes) break;
    }
  }
  return subgraph(graph, order);
}

Graph induced_graph(const Graph& graph, const Target& target, int hops, int max_nodes) {
  if (hops < 1) throw ValidationError("induced_graph: hops must be >= 1");
  const int n = graph.node_count();
  std::vector<int> sources;
  if (const int* v = std::get_if<int>(&target)) {
    if (*v < 0 || *v >= n) throw ValidationError("induced_graph: target node " + std::to_string(*v) + " out of range");
    if (max_nodes < 1) throw ValidationError("induced_graph: max_nodes must be >= 1");
    sources = {*v};
  } else {
    const Edge& e = std::get<Edge>(target);
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n) throw ValidationError("induced_graph: target edge out of range");
    if (!graph.has_edge(e.u, e.v)) {
      throw ValidationError("induced_graph: (" + std::to_string(e.u) + ", " + std::to_string(e.v) + ") is not an edge");
    }
    if (max_nodes < 2) throw ValidationError("induced_graph: max_nodes must be >= 2 for edge targets");
    sources = {e.u, e.v};
  }

  return neighborhood_graph(graph, sources, hops, max_nodes);
}

std::string to_string(Augmentation kind) {
  switch (kind) {
    case Augmentation::identity: return "identity";
    case Augmentation::drop_nodes: return "drop_nodes";
    case Augmentation::drop_edges: return "drop_edges";
    case Augmentation::mask_features: return "mask_features";
  }
  return "unknown";
}

Augmentation parse_augmentation(const std::string& s) {
  if (s == "identity") return Augmentation::identity;
  if (s == "drop_nodes") return Augmentation::drop_nodes;
  if (s == "drop_edges") return Augmentation::drop_edges;
  if (s == "mask_features") return Augmentation::mask_features;
  throw ValidationError("unknown augmentation kind '" + s + "'");
}

int ratio_count(double ratio, std::size_t n) {
  return static_cast<int>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

Graph augment(const Graph& graph, Augmentation kind, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError("augment: ratio must lie in [0, 1]");
  if (graph.node_count() == 0) throw ValidationError("augment: graph is empty");
  const std::size_t n = static_cast<std::size_t>(graph.node_count());

  switch (kind) {
    case Augmentation::identity:
      return graph;

    case Augmentation::drop_nodes: {
      const auto dropped = rng.sample_without_replacement(n, static_cast<std::size_t>(ratio_count(ratio, n)));
      std::vector<bool> gone(n, false);
      for (std::size_t v : dropped) gone[v] = true;
      std::vector<int> keep;
      for (std::size_t v = 0; v < n; ++v) {
        if (!gone[v]) keep.push_back(static_cast<int>(v));
      }
      Graph out = subgraph(graph, keep);
      out.set_graph_class(graph.graph_class());
      out.set_graph_targets(graph.graph_targets());
      if (graph.node_ids().empty() && keep.size() == n) out.set_node_ids({});
      return out;
    }

    case Augmentation::drop_edges: {
      const auto& edges = graph.edges();
      const auto dropped =
          rng.sample_without_replacement(edges.size(), static_cast<std::size_t>(ratio_count(ratio, edges.size())));
      std::vector<bool> gone(edges.size(), false);
      for (std::size_t i : dropped) gone[i] = true;
      std::vector<Edge> kept;
      std::map<Edge, int> labels;
      for (std::size_t i = 0; i < edges.size(); ++i) {
        if (gone[i]) continue;
        kept.push_back(edges[i]);
        if (auto it = graph.edge_labels().find(edges[i]); it != graph.edge_labels().end()) labels[edges[i]] = it->second;
      }
      Graph out(graph.features(), kept);
      out.set_node_labels(graph.node_labels());
      out.set_edge_labels(std::move(labels));
      out.set_graph_class(graph.graph_class());
      out.set_graph_targets(graph.graph_targets());
      out.set_node_ids(graph.node_ids());
      return out;
    }

    case Augmentation::mask_features: {
      Graph out = graph;
      Matrix features = graph.features();
      for (std::size_t v : rng.sample_without_replacement(n, static_cast<std::size_t>(ratio_count(ratio, n)))) {
        features.row(static_cast<Eigen::Index>(v)).setZero();
      }
      out.set_features(std::move(features));
      return out;
    }
  }
  throw ValidationError("augment: unknown kind");
}

namespace {

Matrix class_means(int classes, int dim, double separation) {
  // Class c is shifted along axis (c mod d); classes sharing an axis alternate sign.
  Matrix means = Matrix::Zero(classes, dim);
  for (int c = 0; c < classes; ++c) {
    const double sign = ((c / dim) % 2 == 0) ? 1.0 : -1.0;
    means(c, c % dim) = sign * separation;
  }
  return means;
}

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("synthesize_dataset: " + what + " must lie in [0, 1]");
}

}  // namespace

Dataset synthesize_dataset(const GeneratorSpec& spec, Rng& rng) {
  if (spec.num_classes < 2) throw ValidationError("synthesize_dataset: need at least 2 classes");
  if (spec.feature_dim < 1) throw ValidationError("synthesize_dataset: feature_dim must be >= 1");
  if (spec.feature_noise < 0.0) throw ValidationError("synthesize_dataset: feature_noise must be >= 0");
  check_probability(spec.p_intra, "p_intra");
  check_probability(spec.p_inter, "p_inter");

  Dataset ds;
  ds.name = spec.name;
  ds.feature_dim = spec.feature_dim;
  ds.num_classes = spec.num_classes;
  const Matrix means = class_means(spec.num_classes, spec.feature_dim, spec.feature_separation);

  if (spec.level == "graph") {
    if (spec.graphs_per_class < 1) throw ValidationError("synthesize_dataset: graphs_per_class must be >= 1");
    if (spec.min_nodes < 2 || spec.max_nodes < spec.min_nodes) {
      throw ValidationError("synthesize_dataset: need 2 <= min_nodes <= max_nodes");
    }
    if (spec.blocks < 1) throw ValidationError("synthesize_dataset: blocks must be >= 1");
    check_probability(spec.p_intra * (1.0 + spec.density_step * (spec.num_classes - 1)), "scaled p_intra");
    ds.task_kind = TaskKind::graph;
    // Per-block feature offsets along the last axis make intra- and inter-block edges
    // distinguishable from features.
    for (int i = 0; i < spec.graphs_per_class; ++i) {
      for (int c = 0; c < spec.num_classes; ++c) {
        const int n = spec.min_nodes + static_cast<int>(rng.index(static_cast<std::size_t>(spec.max_nodes - spec.min_nodes + 1)));
        const double p_in = spec.p_intra * (1.0 + spec.density_step * c);
        std::vector<int> block(static_cast<std::size_t>(n));
        for (int v = 0; v < n; ++v) block[static_cast<std::size_t>(v)] = v % spec.blocks;
        Matrix x(n, spec.feature_dim);
        for (int v = 0; v < n; ++v) {
          for (int j = 0; j < spec.feature_dim; ++j) x(v, j) = means(c, j) + rng.normal(0.0, spec.feature_noise);
          if (spec.blocks > 1) {
            x(v, spec.feature_dim - 1) += (block[static_cast<std::size_t>(v)] % 2 == 0 ? 1.0 : -1.0) * spec.feature_separation;
          }
        }
        std::vector<Edge> edges;
        std::map<Edge, int> edge_labels;
        for (int a = 0; a < n; ++a) {
          for (int b = a + 1; b < n; ++b) {
            const bool same = block[static_cast<std::size_t>(a)] == block[static_cast<std::size_t>(b)];
            if (rng.bernoulli(same ? p_in : spec.p_inter)) {
              edges.push_back(Edge{a, b});
              edge_labels[Edge{a, b}] = same ? 1 : 0;
            }
          }
        }
        Graph g(std::move(x), edges);
        g.set_edge_labels(std::move(edge_labels));
        g.set_graph_class(c);
        ds.graphs.push_back(std::move(g));
      }
    }
  } else if (spec.level == "node") {
    if (spec.nodes_per_class < 1) throw ValidationError("synthesize_dataset: nodes_per_class must be >= 1");
    ds.task_kind = TaskKind::node;
    const int n = spec.nodes_per_class * spec.num_classes;
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) labels[static_cast<std::size_t>(v)] = v % spec.num_classes;
    Matrix x(n, spec.feature_dim);
    for (int v = 0; v < n; ++v) {
      for (int j = 0; j < spec.feature_dim; ++j) {
        x(v, j) = means(labels[static_cast<std::size_t>(v)], j) + rng.normal(0.0, spec.feature_noise);
      }
    }
    std::vector<Edge> edges;
    std::map<Edge, int> edge_labels;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        const bool same = labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(b)];
        if (rng.bernoulli(same ? spec.p_intra : spec.p_inter)) {
          edges.push_back(Edge{a, b});
          edge_labels[Edge{a, b}] = same ? 1 : 0;
        }
      }
    }
    Graph g(std::move(x), edges);
    g.set_node_labels(std::move(labels));
    g.set_edge_labels(std::move(edge_labels));
    ds.graphs.push_back(std::move(g));
  } else {
    throw ValidationError("synthesize_dataset: unknown level '" + spec.level + "'");
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace gprompt
