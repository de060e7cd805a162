#include "graphprompt/dataset_io.hpp"

#include "graphprompt/errors.hpp"
#include "graphprompt/log.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace gprompt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string where(const fs::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line);
}

double parse_double(const std::string& s, const fs::path& file, std::size_t line) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw SchemaError(where(file, line) + ": cannot parse number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const fs::path& file, std::size_t line) {
  int v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw SchemaError(where(file, line) + ": cannot parse integer '" + s + "'");
  return v;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void require_file(const fs::path& file) {
  if (!fs::exists(file)) throw IoError("missing dataset file " + file.string());
}

struct NodeRow {
  std::string id;
  int label = -1;
  std::vector<double> features;
  std::string graph_id;
};

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const fs::path nodes_path = dir / "nodes.tsv";
  const fs::path edges_path = dir / "edges.tsv";
  require_file(meta_path);
  require_file(nodes_path);
  require_file(edges_path);

  Dataset ds;
  bool directed = false;
  {
    std::ifstream in(meta_path);
    if (!in) throw IoError("cannot open " + meta_path.string());
    json meta;
    try {
      in >> meta;
      ds.name = meta.at("name").get<std::string>();
      ds.feature_dim = meta.at("feature_dim").get<int>();
      ds.num_classes = meta.at("num_classes").get<int>();
      ds.task_kind = parse_task_kind(meta.at("task_kind").get<std::string>());
      ds.multilabel = meta.value("multilabel", false);
      directed = meta.value("directed", false);
    } catch (const json::exception& e) {
      throw SchemaError("meta.json: " + std::string(e.what()));
    } catch (const ValidationError& e) {
      throw SchemaError("meta.json: " + std::string(e.what()));
    }
    if (ds.feature_dim < 1) throw SchemaError("meta.json: feature_dim must be >= 1");
  }

  std::vector<NodeRow> rows;
  std::unordered_map<std::string, std::size_t> row_of;
  {
    const auto lines = read_lines(nodes_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cols = split(lines[i], '\t');
      if (cols.size() != 3) throw SchemaError(where(nodes_path, i + 1) + ": expected 3 tab-separated columns");
      NodeRow row;
      row.id = cols[0];
      if (cols[1] != "-") row.label = parse_int(cols[1], nodes_path, i + 1);
      for (const auto& f : split(cols[2], ',')) row.features.push_back(parse_double(f, nodes_path, i + 1));
      if (static_cast<int>(row.features.size()) != ds.feature_dim) {
        throw SchemaError(where(nodes_path, i + 1) + ": " + std::to_string(row.features.size()) +
                          " features, meta.json declares " + std::to_string(ds.feature_dim));
      }
      if (!row_of.emplace(row.id, rows.size()).second) {
        throw ValidationError(where(nodes_path, i + 1) + ": duplicate node id '" + row.id + "'");
      }
      rows.push_back(std::move(row));
    }
  }

  // Group nodes into graphs, preserving first-appearance order of graph ids.
  std::vector<std::string> graph_order;
  std::unordered_map<std::string, std::size_t> graph_index;
  const fs::path graphs_path = dir / "graphs.tsv";
  if (fs::exists(graphs_path)) {
    const auto lines = read_lines(graphs_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cols = split(lines[i], '\t');
      if (cols.size() != 2) throw SchemaError(where(graphs_path, i + 1) + ": expected node_id<TAB>graph_id");
      auto it = row_of.find(cols[0]);
      if (it == row_of.end()) throw ValidationError(where(graphs_path, i + 1) + ": unknown node id '" + cols[0] + "'");
      rows[it->second].graph_id = cols[1];
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (graph_index.emplace(rows[r].graph_id, graph_order.size()).second) graph_order.push_back(rows[r].graph_id);
  }
  const std::size_t num_graphs = graph_order.size();
  std::vector<std::vector<std::size_t>> members(num_graphs);
  std::vector<int> local_index(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& m = members[graph_index.at(rows[r].graph_id)];
    local_index[r] = static_cast<int>(m.size());
    m.push_back(r);
  }

  std::vector<std::vector<Edge>> edges(num_graphs);
  std::vector<std::map<Edge, int>> edge_labels(num_graphs);
  std::vector<std::set<Edge>> seen(num_graphs);
  std::size_t duplicates = 0;
  std::size_t self_loops = 0;
  {
    const auto lines = read_lines(edges_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cols = split(lines[i], '\t');
      if (cols.size() != 2 && cols.size() != 3) {
        throw SchemaError(where(edges_path, i + 1) + ": expected src<TAB>dst[<TAB>edge_label]");
      }
      auto a = row_of.find(cols[0]);
      auto b = row_of.find(cols[1]);
      if (a == row_of.end() || b == row_of.end()) {
        throw ValidationError(where(edges_path, i + 1) + ": edge endpoint '" +
                              (a == row_of.end() ? cols[0] : cols[1]) + "' is not a node");
      }
      const std::size_t g = graph_index.at(rows[a->second].graph_id);
      if (g != graph_index.at(rows[b->second].graph_id)) {
        throw ValidationError(where(edges_path, i + 1) + ": edge crosses graphs");
      }
      if (a->second == b->second) {
        ++self_loops;
        continue;
      }
      const Edge e = make_edge(local_index[a->second], local_index[b->second]);
      if (!seen[g].insert(e).second) {
        ++duplicates;
        continue;
      }
      edges[g].push_back(e);
      if (cols.size() == 3) edge_labels[g][e] = parse_int(cols[2], edges_path, i + 1);
    }
  }
  if (directed || duplicates > 0) {
    log_warning(fmt::format("{}: symmetrized directed edges ({} reverse/duplicate rows merged)", ds.name, duplicates));
  }
  if (self_loops > 0) log_warning(fmt::format("{}: dropped {} self-loop rows", ds.name, self_loops));

  std::unordered_map<std::string, std::string> graph_label_text;
  const fs::path labels_path = dir / "graph_labels.tsv";
  if (fs::exists(labels_path)) {
    const auto lines = read_lines(labels_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cols = split(lines[i], '\t');
      if (cols.size() != 2) throw SchemaError(where(labels_path, i + 1) + ": expected graph_id<TAB>label");
      if (!graph_index.count(cols[0])) {
        throw ValidationError(where(labels_path, i + 1) + ": unknown graph id '" + cols[0] + "'");
      }
      graph_label_text[cols[0]] = cols[1];
    }
  }

  for (std::size_t g = 0; g < num_graphs; ++g) {
    const auto& m = members[g];
    Matrix x(static_cast<Eigen::Index>(m.size()), ds.feature_dim);
    std::vector<int> labels(m.size());
    bool any_label = false;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const NodeRow& row = rows[m[i]];
      for (int j = 0; j < ds.feature_dim; ++j) x(static_cast<Eigen::Index>(i), j) = row.features[static_cast<std::size_t>(j)];
      labels[i] = row.label;
      any_label = any_label || row.label != -1;
    }
    Graph graph(std::move(x), edges[g]);
    if (any_label) graph.set_node_labels(std::move(labels));
    graph.set_edge_labels(std::move(edge_labels[g]));
    if (auto it = graph_label_text.find(graph_order[g]); it != graph_label_text.end()) {
      if (ds.task_kind == TaskKind::regression) {
        std::vector<double> targets;
        for (const auto& v : split(it->second, ',')) targets.push_back(parse_double(v, labels_path, 0));
        graph.set_graph_targets(std::move(targets));
      } else {
        graph.set_graph_class(parse_int(it->second, labels_path, 0));
      }
    }
    ds.graphs.push_back(std::move(graph));
  }
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  validate_dataset(dataset);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    return out;
  };

  {
    json meta = {{"name", dataset.name},
                 {"feature_dim", dataset.feature_dim},
                 {"num_classes", dataset.num_classes},
                 {"task_kind", to_string(dataset.task_kind)}};
    if (dataset.multilabel) meta["multilabel"] = true;
    auto out = open("meta.json");
    out << meta.dump(2) << "\n";
  }

  const bool multi = dataset.graphs.size() != 1;
  auto nodes = open("nodes.tsv");
  auto edges = open("edges.tsv");
  std::ofstream graphs;
  std::ofstream graph_labels;
  if (multi) graphs = open("graphs.tsv");
  bool any_graph_label = false;
  for (const Graph& g : dataset.graphs) any_graph_label = any_graph_label || g.graph_class() || !g.graph_targets().empty();
  if (any_graph_label) graph_labels = open("graph_labels.tsv");

  std::size_t base = 0;
  for (std::size_t gi = 0; gi < dataset.graphs.size(); ++gi) {
    const Graph& g = dataset.graphs[gi];
    for (int v = 0; v < g.node_count(); ++v) {
      nodes << (base + static_cast<std::size_t>(v)) << '\t';
      const int label = g.has_node_labels() ? g.node_labels()[static_cast<std::size_t>(v)] : -1;
      if (label == -1) {
        nodes << '-';
      } else {
        nodes << label;
      }
      nodes << '\t';
      for (int j = 0; j < g.feature_dim(); ++j) nodes << (j ? "," : "") << fmt::format("{}", g.features()(v, j));
      nodes << '\n';
      if (multi) graphs << (base + static_cast<std::size_t>(v)) << '\t' << gi << '\n';
    }
    for (const Edge& e : g.edges()) {
      edges << (base + static_cast<std::size_t>(e.u)) << '\t' << (base + static_cast<std::size_t>(e.v));
      if (auto it = g.edge_labels().find(e); it != g.edge_labels().end()) edges << '\t' << it->second;
      edges << '\n';
    }
    if (g.graph_class()) {
      graph_labels << gi << '\t' << *g.graph_class() << '\n';
    } else if (!g.graph_targets().empty()) {
      graph_labels << gi << '\t';
      for (std::size_t k = 0; k < g.graph_targets().size(); ++k) {
        graph_labels << (k ? "," : "") << fmt::format("{}", g.graph_targets()[k]);
      }
      graph_labels << '\n';
    }
    base += static_cast<std::size_t>(g.node_count());
  }
}

}  // namespace gprompt
