#include "graphprompt/training.hpp"

#include "graphprompt/errors.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <string>

namespace gprompt {

std::vector<Matrix> gather_parameters(const PromptedModel& model, Trainable which) {
  std::vector<Matrix> out;
  if (which.prompt) {
    if (!model.prompt) throw ContractError("no prompt to train");
    out.push_back(model.prompt->tokens);
    out.push_back(model.prompt->structure_params);
  }
  if (which.backbone) {
    for (const Matrix& w : model.backbone.weights()) out.push_back(w);
  }
  if (which.head) {
    out.push_back(model.head.weight);
    out.push_back(model.head.bias);
  }
  return out;
}

void scatter_parameters(PromptedModel& model, Trainable which, const std::vector<Matrix>& params) {
  std::size_t i = 0;
  auto next = [&]() -> const Matrix& {
    if (i >= params.size()) throw ValidationError("parameter list is too short");
    return params[i++];
  };
  if (which.prompt) {
    if (!model.prompt) throw ContractError("no prompt to train");
    model.prompt->tokens = next();
    model.prompt->structure_params = next();
  }
  if (which.backbone) {
    std::vector<Matrix> w;
    for (std::size_t l = 0; l < model.backbone.weights().size(); ++l) w.push_back(next());
    model.backbone.set_weights(std::move(w));
  }
  if (which.head) {
    model.head.weight = next();
    model.head.bias = next();
  }
  if (i != params.size()) throw ValidationError("parameter list is too long");
}

double task_loss(const PromptedModel& model, Trainable which, std::span<const Example> examples,
                 std::vector<Matrix>* grads) {
  if (examples.empty()) throw ValidationError("task loss over an empty example set");
  if (model.prompt && !model.backbone.frozen()) throw ContractError("prompting requires a frozen backbone");
  if (which.backbone && model.backbone.frozen()) throw ContractError("cannot train a frozen backbone");

  ad::Tape tape;
  auto var = [&](const Matrix& m, bool trainable) { return (grads && trainable) ? tape.parameter(m) : tape.constant(m); };

  std::vector<ad::Var> params;
  PromptVars pv;
  if (model.prompt) {
    pv.tokens = var(model.prompt->tokens, which.prompt);
    pv.structure = var(model.prompt->structure_params, which.prompt);
    if (which.prompt) params.insert(params.end(), {pv.tokens, pv.structure});
  }
  std::vector<ad::Var> weights;
  for (const Matrix& w : model.backbone.weights()) weights.push_back(var(w, which.backbone));
  if (which.backbone) params.insert(params.end(), weights.begin(), weights.end());
  ad::Var head_w = var(model.head.weight, which.head);
  ad::Var head_b = var(model.head.bias, which.head);
  if (which.head) params.insert(params.end(), {head_w, head_b});

  std::vector<ad::Var> rows;
  rows.reserve(examples.size());
  for (const Example& ex : examples) {
    InsertedInput in = model.prompt ? insert_on_tape(tape, *model.prompt, pv, ex.graph)
                                    : InsertedInput{tape.constant(ex.graph.features()),
                                                    tape.constant(normalized_adjacency(ex.graph))};
    ad::Var emb = encode(model.backbone.config(), weights, in.features, in.norm_adjacency);
    rows.push_back(ad::add_row(ad::matmul(emb, head_w), head_b));
  }
  ad::Var logits = ad::vstack(rows);
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();

  ad::Var loss;
  switch (model.head.kind) {
    case HeadKind::classify: {
      if (model.head.label_mode == LabelMode::multiclass_softmax) {
        std::vector<int> labels;
        for (const Example& ex : examples) labels.push_back(ex.label);
        loss = ad::softmax_cross_entropy(logits, labels);
      } else {
        Matrix targets = Matrix::Zero(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
          const int y = examples[static_cast<std::size_t>(i)].label;
          if (y < 0 || y >= c) throw ValidationError("label outside the head's class range");
          targets(i, y) = 1.0;
        }
        loss = ad::bce_with_logits(logits, targets);
      }
      break;
    }
    case HeadKind::link_score: {
      Matrix targets(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) targets(i, 0) = examples[static_cast<std::size_t>(i)].label == 1 ? 1.0 : 0.0;
      loss = ad::bce_with_logits(logits, targets);
      break;
    }
    case HeadKind::regress: {
      Matrix targets(n, c);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = examples[static_cast<std::size_t>(i)].target;
        if (static_cast<Eigen::Index>(t.size()) != c) throw ValidationError("regression target arity mismatch");
        for (Eigen::Index j = 0; j < c; ++j) targets(i, j) = t[static_cast<std::size_t>(j)];
      }
      loss = ad::mean_squared_error(logits, targets);
      break;
    }
  }

  const double value = loss.value()(0, 0);
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const ad::Var& p : params) grads->push_back(tape.grad(p));
  }
  return value;
}

Matrix predict(const PromptedModel& model, std::span<const Example> examples) {
  Matrix out(static_cast<Eigen::Index>(examples.size()), model.head.outputs());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    RowVector row;
    if (model.prompt) {
      row = prompted_forward(*model.prompt, examples[i].graph, model.backbone, model.head);
    } else {
      const Embedding emb = forward(model.backbone, examples[i].graph);
      row = head_activation(model.head, emb.graph * model.head.weight + model.head.bias.row(0));
    }
    out.row(static_cast<Eigen::Index>(i)) = row;
  }
  return out;
}

DescentResult minimize(const LossFunction& loss, std::vector<Matrix> start, const TuneConfig& config) {
  if (config.steps < 0) throw ValidationError("steps must be >= 0");
  DescentResult r;
  r.best = start;
  r.best_loss = std::numeric_limits<double>::infinity();
  Optimizer opt(config.optimizer, config.learning_rate);
  std::vector<Matrix> params = std::move(start);
  std::vector<Matrix> grads;
  for (int step = 0; step <= config.steps; ++step) {
    const bool last = step == config.steps;
    const double value = loss(params, last ? nullptr : &grads);
    if (!std::isfinite(value)) throw NumericError("loss is not finite at step " + std::to_string(step));
    r.trace.push_back(value);
    if (value < r.best_loss) {
      r.best_loss = value;
      r.best = params;
    }
    if (!last) opt.step(params, grads);
  }
  return r;
}

FitResult fit(const PromptedModel& model, Trainable which, std::span<const Example> examples, const TuneConfig& config) {
  FitResult out{model, {}};
  const DescentResult r = minimize(
      [&](const std::vector<Matrix>& params, std::vector<Matrix>* grads) {
        PromptedModel m = model;
        scatter_parameters(m, which, params);
        return task_loss(m, which, examples, grads);
      },
      gather_parameters(model, which), config);
  scatter_parameters(out.model, which, r.best);
  out.loss_trace = r.trace;
  return out;
}

TuneResult tune_prompt(const PromptGraph& prompt, const TaskHead& head, std::span<const TaskEpisode> episodes,
                       const BackboneModel& frozen_model, const TuneConfig& config) {
  if (!frozen_model.frozen()) throw ContractError("prompt tuning requires a frozen backbone");
  if (episodes.empty()) throw ValidationError("tune_prompt needs at least one episode");
  std::vector<Example> support;
  for (const TaskEpisode& ep : episodes) support.insert(support.end(), ep.support.begin(), ep.support.end());
  const FitResult r = fit(PromptedModel{frozen_model, prompt, head}, kPromptAndHead, support, config);
  return TuneResult{*r.model.prompt, r.model.head, r.loss_trace,
                    *std::min_element(r.loss_trace.begin(), r.loss_trace.end())};
}

}  // namespace gprompt
