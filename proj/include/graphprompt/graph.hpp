#pragma once

#include "graphprompt/autograd.hpp"
#include "graphprompt/rng.hpp"

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gprompt {

// Undirected edge stored canonically (u < v).
struct Edge {
  int u = 0;
  int v = 0;
  auto operator<=>(const Edge&) const = default;
};

// Canonical edge for an unordered pair. Throws ValidationError on a self-loop.
Edge make_edge(int a, int b);

// Undirected simple graph with dense node features and optional labels.
//
// Invariants: edge endpoints lie in [0, N); no self-loops; edges sorted and unique;
// label vectors (when present) have length N.
class Graph {
 public:
  Graph() = default;
  // Canonicalizes and deduplicates `edges`; rejects self-loops and dangling endpoints.
  Graph(Matrix features, const std::vector<Edge>& edges);

  int node_count() const { return static_cast<int>(features_.rows()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  std::size_t edge_count() const { return edges_.size(); }

  const Matrix& features() const { return features_; }
  void set_features(Matrix features);
  const std::vector<Edge>& edges() const { return edges_; }
  bool has_edge(int a, int b) const;

  // Sorted neighbour lists.
  std::vector<std::vector<int>> adjacency_list() const;
  // Dense symmetric 0/1 adjacency without self-loops.
  Matrix adjacency_matrix() const;

  // -1 marks an unlabeled node. Empty when the graph carries no node labels.
  const std::vector<int>& node_labels() const { return node_labels_; }
  bool has_node_labels() const { return !node_labels_.empty(); }
  void set_node_labels(std::vector<int> labels);

  const std::map<Edge, int>& edge_labels() const { return edge_labels_; }
  void set_edge_labels(std::map<Edge, int> labels);

  std::optional<int> graph_class() const { return graph_class_; }
  void set_graph_class(std::optional<int> label) { graph_class_ = label; }
  const std::vector<double>& graph_targets() const { return graph_targets_; }
  void set_graph_targets(std::vector<double> targets) { graph_targets_ = std::move(targets); }

  // Original node ids after subgraph extraction; empty means identity.
  const std::vector<int>& node_ids() const { return node_ids_; }
  void set_node_ids(std::vector<int> ids);
  int original_id(int node) const { return node_ids_.empty() ? node : node_ids_[static_cast<std::size_t>(node)]; }

  bool operator==(const Graph& other) const;

 private:
  Matrix features_;
  std::vector<Edge> edges_;
  std::vector<int> node_labels_;
  std::map<Edge, int> edge_labels_;
  std::optional<int> graph_class_;
  std::vector<double> graph_targets_;
  std::vector<int> node_ids_;
};

enum class TaskKind { node, edge, graph, link, regression };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& s);

struct Dataset {
  std::string name;
  TaskKind task_kind = TaskKind::graph;
  int feature_dim = 0;
  int num_classes = 0;
  bool multilabel = false;
  std::vector<Graph> graphs;
  // Optional provenance per graph (reformulated targets), parallel to `graphs`.
  std::vector<std::string> instance_ids;
};

// Checks shared feature dimension and label ranges. Throws ValidationError.
void validate_dataset(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Induced subgraphs

using Target = std::variant<int, Edge>;

inline constexpr int kDefaultHops = 2;
inline constexpr int kDefaultMaxNodes = 100;

// Vertex-induced subgraph on every node within `hops` of the target (node, or either
// endpoint of an edge). Nodes are ordered by BFS discovery with the target(s) first and
// truncated to `max_nodes`. node_ids record original indices; node and edge labels are
// carried over.
Graph induced_graph(const Graph& graph, const Target& target, int hops = kDefaultHops,
                    int max_nodes = kDefaultMaxNodes);

// Same BFS extraction around arbitrary seed nodes (which need not be adjacent), e.g. a
// candidate link whose edge is absent from the graph.
Graph neighborhood_graph(const Graph& graph, const std::vector<int>& sources, int hops = kDefaultHops,
                         int max_nodes = kDefaultMaxNodes);

// Vertex-induced subgraph on an explicit node list, in the given order.
Graph subgraph(const Graph& graph, const std::vector<int>& nodes);

// ---------------------------------------------------------------------------
// Augmentations

enum class Augmentation { identity, drop_nodes, drop_edges, mask_features };

std::string to_string(Augmentation kind);
Augmentation parse_augmentation(const std::string& s);

// floor(ratio * n), tolerant of representation error in ratio.
int ratio_count(double ratio, std::size_t n);

Graph augment(const Graph& graph, Augmentation kind, double ratio, Rng& rng);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct GeneratorSpec {
  // "graph": many planted-partition graphs, one class per graph.
  // "node": one stochastic-block graph, node label = block, edge label = 1 for
  // intra-block edges and 0 otherwise.
  std::string level = "graph";
  int num_classes = 2;
  int graphs_per_class = 10;   // graph level
  int min_nodes = 20;          // graph level
  int max_nodes = 50;          // graph level
  int nodes_per_class = 100;   // node level
  int blocks = 2;              // planted blocks per graph (graph level)
  double p_intra = 0.3;
  double p_inter = 0.05;
  // Class c graphs scale p_intra by (1 + density_step * c) (graph level).
  double density_step = 0.5;
  int feature_dim = 8;
  double feature_separation = 2.0;
  double feature_noise = 1.0;
  std::string name = "synthetic";
};

Dataset synthesize_dataset(const GeneratorSpec& spec, Rng& rng);

}  // namespace gprompt
