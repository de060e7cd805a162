#pragma once

#include "graphprompt/graph.hpp"

#include <filesystem>

namespace gprompt {

// Reads a dataset directory:
//   meta.json         {name, feature_dim, num_classes, task_kind[, multilabel, directed]}
//   nodes.tsv         node_id<TAB>label_or_dash<TAB>f1,f2,...,fd
//   edges.tsv         src<TAB>dst[<TAB>edge_label]
//   graphs.tsv        node_id<TAB>graph_id              (optional; absent => one graph)
//   graph_labels.tsv  graph_id<TAB>label_or_targets      (optional; int class or comma-separated reals)
// Row order of nodes.tsv defines node indices within each graph.
//
// Throws IoError for a missing file, SchemaError when rows disagree with meta.json,
// and ValidationError (with the offending line) for dangling edge endpoints.
Dataset load_dataset(const std::filesystem::path& dir);

// Writes `dataset` in the layout read by load_dataset. Node ids are written as
// running indices; provenance ids are not persisted.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace gprompt
