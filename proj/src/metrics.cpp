#include "graphprompt/metrics.hpp"

#include "graphprompt/errors.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>

namespace gprompt {

namespace {

void check_lengths(Eigen::Index rows, std::size_t labels) {
  if (static_cast<std::size_t>(rows) != labels) throw ValidationError("predictions and labels differ in length");
  if (labels == 0) throw ValidationError("metrics over an empty prediction set");
}

// Area under the ROC curve of `score` separating positives from negatives, counting ties
// as one half.
double binary_auc(const std::vector<double>& score, const std::vector<bool>& positive) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  std::vector<double> rank(score.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(score.size()) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

}  // namespace

std::vector<int> predicted_classes(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    if (scores.cols() == 1) {
      out[static_cast<std::size_t>(i)] = scores(i, 0) > 0.5 ? 1 : 0;
    } else {
      Eigen::Index arg = 0;
      scores.row(i).maxCoeff(&arg);
      out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
  }
  return out;
}

double accuracy(const Matrix& scores, const std::vector<int>& labels) {
  check_lengths(scores.rows(), labels.size());
  const auto pred = predicted_classes(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double macro_f1(const Matrix& scores, const std::vector<int>& labels) {
  check_lengths(scores.rows(), labels.size());
  const auto pred = predicted_classes(scores);
  std::set<int> classes(labels.begin(), labels.end());
  classes.insert(pred.begin(), pred.end());
  double total = 0.0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      tp += pred[i] == c && labels[i] == c;
      fp += pred[i] == c && labels[i] != c;
      fn += pred[i] != c && labels[i] == c;
    }
    total += 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / static_cast<double>(classes.size());
}

double auc(const Matrix& scores, const std::vector<int>& labels) {
  check_lengths(scores.rows(), labels.size());
  const std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) throw UndefinedMetricError("AUC is undefined when labels contain a single class");
  if (scores.cols() == 1) {
    if (*present.begin() < 0 || *present.rbegin() > 1) throw ValidationError("single score column needs 0/1 labels");
    std::vector<double> s(labels.size());
    std::vector<bool> pos(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = scores(static_cast<Eigen::Index>(i), 0);
      pos[i] = labels[i] == 1;
    }
    return binary_auc(s, pos);
  }
  double total = 0.0;
  int counted = 0;
  for (int c : present) {
    if (c < 0 || c >= scores.cols()) throw ValidationError("label outside the score columns");
    std::vector<double> s(labels.size());
    std::vector<bool> pos(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = scores(static_cast<Eigen::Index>(i), c);
      pos[i] = labels[i] == c;
    }
    total += binary_auc(s, pos);
    ++counted;
  }
  return total / counted;
}

double mean_absolute_error(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() || predictions.size() == 0) {
    throw ValidationError("prediction and target shapes differ");
  }
  return (predictions - targets).cwiseAbs().mean();
}

double mean_squared_error(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() || predictions.size() == 0) {
    throw ValidationError("prediction and target shapes differ");
  }
  return (predictions - targets).array().square().mean();
}

std::vector<int> positive_ranks(const std::vector<double>& scores, const std::vector<int>& labels,
                                const std::vector<int>& groups) {
  if (scores.size() != labels.size() || scores.size() != groups.size()) {
    throw ValidationError("ranking inputs differ in length");
  }
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < scores.size(); ++i) members[groups[i]].push_back(i);
  std::vector<int> ranks;
  for (const auto& [group, idx] : members) {
    std::optional<std::size_t> positive;
    for (std::size_t i : idx) {
      if (labels[i] == 1) {
        if (positive) throw ValidationError("ranking group " + std::to_string(group) + " has two positives");
        positive = i;
      }
    }
    if (!positive) throw ValidationError("ranking group " + std::to_string(group) + " has no positive");
    int rank = 1;
    for (std::size_t i : idx) rank += i != *positive && scores[i] >= scores[*positive];
    ranks.push_back(rank);
  }
  return ranks;
}

double mean_reciprocal_rank(const std::vector<int>& ranks) {
  if (ranks.empty()) throw ValidationError("no ranked queries");
  double total = 0.0;
  for (int r : ranks) total += 1.0 / r;
  return total / static_cast<double>(ranks.size());
}

double hit_at(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw ValidationError("no ranked queries");
  return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; })) /
         static_cast<double>(ranks.size());
}

std::vector<std::string> metric_names(TaskKind kind) {
  switch (kind) {
    case TaskKind::regression: return {"mae", "mse"};
    case TaskKind::link: return {"hit@1", "hit@10", "hit@5", "mrr"};
    default: return {"acc", "auc", "f1"};
  }
}

MetricMap compute_metrics(const Matrix& predictions, std::span<const Example> truth, TaskKind kind) {
  check_lengths(predictions.rows(), truth.size());
  MetricMap m;
  if (kind == TaskKind::regression) {
    Matrix targets(predictions.rows(), predictions.cols());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (static_cast<Eigen::Index>(truth[i].target.size()) != predictions.cols()) {
        throw ValidationError("regression target arity mismatch");
      }
      for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
        targets(static_cast<Eigen::Index>(i), j) = truth[i].target[static_cast<std::size_t>(j)];
      }
    }
    m["mae"] = mean_absolute_error(predictions, targets);
    m["mse"] = mean_squared_error(predictions, targets);
    return m;
  }
  std::vector<int> labels;
  for (const Example& ex : truth) labels.push_back(ex.label);
  if (kind == TaskKind::link) {
    if (predictions.cols() != 1) throw ValidationError("link scores need one column");
    std::vector<double> scores;
    std::vector<int> groups;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores.push_back(predictions(static_cast<Eigen::Index>(i), 0));
      groups.push_back(truth[i].group);
    }
    const auto ranks = positive_ranks(scores, labels, groups);
    m["mrr"] = mean_reciprocal_rank(ranks);
    for (int k : {1, 5, 10}) m["hit@" + std::to_string(k)] = hit_at(ranks, k);
    return m;
  }
  m["acc"] = accuracy(predictions, labels);
  m["f1"] = macro_f1(predictions, labels);
  m["auc"] = auc(predictions, labels);
  return m;
}

}  // namespace gprompt
