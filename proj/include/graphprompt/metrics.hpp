#pragma once

// Evaluation metrics for classification, regression and link ranking.

#include "graphprompt/autograd.hpp"
#include "graphprompt/episode.hpp"
#include "graphprompt/graph.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace gprompt {

using MetricMap = std::map<std::string, double>;

// Class scores are N × C, one row per instance. A single column holds the
// positive-class score of a binary problem (threshold 0.5 for accuracy/F1).
std::vector<int> predicted_classes(const Matrix& scores);

double accuracy(const Matrix& scores, const std::vector<int>& labels);

// Unweighted mean of per-class F1 over the classes present in labels or predictions.
double macro_f1(const Matrix& scores, const std::vector<int>& labels);

// One-vs-rest AUC (Mann-Whitney with midranks for ties) averaged over the classes
// that have both positive and negative instances. Throws UndefinedMetricError when
// fewer than two classes occur in `labels`.
double auc(const Matrix& scores, const std::vector<int>& labels);

// Mean over instances and targets.
double mean_absolute_error(const Matrix& predictions, const Matrix& targets);
double mean_squared_error(const Matrix& predictions, const Matrix& targets);

// Rank of each group's positive among its candidates: 1 + number of negatives scoring at
// least as high (ties count against the positive). Every group needs exactly one positive.
std::vector<int> positive_ranks(const std::vector<double>& scores, const std::vector<int>& labels,
                                const std::vector<int>& groups);
double mean_reciprocal_rank(const std::vector<int>& ranks);
double hit_at(const std::vector<int>& ranks, int k);

// Metric set of a task kind: acc/f1/auc for node, edge and graph classification;
// mae/mse for regression; mrr/hit@1/hit@5/hit@10 for link prediction.
std::vector<std::string> metric_names(TaskKind kind);

// Dispatches on `kind`. Labels, regression targets and ranking groups come from
// `truth`. Throws ValidationError when lengths disagree.
MetricMap compute_metrics(const Matrix& predictions, std::span<const Example> truth, TaskKind kind);

}  // namespace gprompt
