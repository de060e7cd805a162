#pragma once

// Shared gradient machinery for everything that fits a (prompt, backbone, head)
// pipeline: prompt tuning, meta-learning, supervised training and fine-tuning.

#include "graphprompt/backbone.hpp"
#include "graphprompt/episode.hpp"
#include "graphprompt/optim.hpp"
#include "graphprompt/prompt.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace gprompt {

// Encoder, optional prompt, answering head.
struct PromptedModel {
  BackboneModel backbone;
  std::optional<PromptGraph> prompt;
  TaskHead head;
};

// Which parameter groups receive gradients. Parameter order is always
// [tokens, structure] (prompt), [W_1..W_L] (backbone), [weight, bias] (head).
struct Trainable {
  bool prompt = false;
  bool backbone = false;
  bool head = true;
};

inline constexpr Trainable kPromptAndHead{true, false, true};
inline constexpr Trainable kBackboneAndHead{false, true, true};
inline constexpr Trainable kHeadOnly{false, false, true};

std::vector<Matrix> gather_parameters(const PromptedModel& model, Trainable which);
// Throws ContractError when writing backbone weights of a frozen model.
void scatter_parameters(PromptedModel& model, Trainable which, const std::vector<Matrix>& params);

// Mean task loss over `examples` (cross-entropy, binary cross-entropy or squared error
// depending on the head) and, when `grads` is given, its gradient in gather order.
// A prompted pipeline requires a frozen backbone.
double task_loss(const PromptedModel& model, Trainable which, std::span<const Example> examples,
                 std::vector<Matrix>* grads = nullptr);

// Head outputs after activation, one row per graph.
Matrix predict(const PromptedModel& model, std::span<const Example> examples);

// Loss evaluated at a parameter vector; fills grads when non-null.
using LossFunction = std::function<double(const std::vector<Matrix>& params, std::vector<Matrix>* grads)>;

struct TuneConfig {
  int steps = 200;
  double learning_rate = 0.01;
  OptimizerKind optimizer = OptimizerKind::adam;
};

struct DescentResult {
  std::vector<Matrix> best;      // best-loss iterate
  double best_loss = 0.0;
  std::vector<double> trace;     // loss at every iterate, steps + 1 entries
};

// `steps` optimizer updates from `start`. Throws NumericError naming the step when the
// loss is not finite.
DescentResult minimize(const LossFunction& loss, std::vector<Matrix> start, const TuneConfig& config);

struct TuneResult {
  PromptGraph prompt;
  TaskHead head;
  std::vector<double> loss_trace;
  double best_loss = 0.0;
};

// Gradient descent on prompt tokens, structure parameters and head over the pooled
// support sets of `episodes`; the backbone is never touched. Returns the best iterate.
TuneResult tune_prompt(const PromptGraph& prompt, const TaskHead& head, std::span<const TaskEpisode> episodes,
                       const BackboneModel& frozen_model, const TuneConfig& config);

// Trains a copy of `model` restricted to `which` on `examples`; returns the best iterate.
struct FitResult {
  PromptedModel model;
  std::vector<double> loss_trace;
};
FitResult fit(const PromptedModel& model, Trainable which, std::span<const Example> examples, const TuneConfig& config);

}  // namespace gprompt
