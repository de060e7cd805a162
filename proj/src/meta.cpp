#include "graphprompt/meta.hpp"

#include "graphprompt/errors.hpp"
#include "graphprompt/optim.hpp"
#include "graphprompt/training.hpp"

#include <cmath>
#include <string>

namespace gprompt {

void validate(const MetaConfig& c) {
  if (c.inner_steps < 0 || c.outer_steps < 0) throw ValidationError("meta step counts must be >= 0");
  if (c.meta_batch < 1) throw ValidationError("meta_batch must be >= 1");
  if (!(c.inner_lr > 0.0) || !(c.outer_lr > 0.0)) throw ValidationError("meta learning rates must be > 0");
  if (!c.first_order) throw ValidationError("only the first-order meta-gradient is implemented");
}

nlohmann::json to_json(const MetaConfig& c) {
  return nlohmann::json{{"inner_steps", c.inner_steps}, {"inner_lr", c.inner_lr},       {"outer_lr", c.outer_lr},
                        {"meta_batch", c.meta_batch},   {"outer_steps", c.outer_steps}, {"first_order", c.first_order},
                        {"seed", c.seed}};
}

AdaptResult inner_adapt(const PromptGraph& prompt, const TaskHead& head, const TaskEpisode& episode,
                        const BackboneModel& frozen_model, int steps, double lr) {
  if (!frozen_model.frozen()) throw ContractError("inner adaptation requires a frozen backbone");
  if (episode.support.empty()) throw ValidationError("episode has no support examples");
  const FitResult r = fit(PromptedModel{frozen_model, prompt, head}, kPromptAndHead, episode.support,
                          TuneConfig{steps, lr, OptimizerKind::sgd});
  return AdaptResult{*r.model.prompt, r.model.head, r.loss_trace};
}

double adapted_query_loss(const PromptGraph& prompt, const TaskHead& head, const TaskEpisode& episode,
                          const BackboneModel& frozen_model, int steps, double lr) {
  if (episode.query.empty()) throw ValidationError("episode has no query examples");
  const AdaptResult a = inner_adapt(prompt, head, episode, frozen_model, steps, lr);
  return task_loss(PromptedModel{frozen_model, a.prompt, a.head}, kPromptAndHead, episode.query);
}

TaskSampler::TaskSampler(std::vector<TaskEpisode> episodes, std::map<TaskKind, double> level_weights)
    : episodes_(std::move(episodes)) {
  for (std::size_t i = 0; i < episodes_.size(); ++i) by_level_[episodes_[i].level].push_back(i);
  double total = 0.0;
  for (const auto& [level, members] : by_level_) {
    double w = 1.0;
    if (auto it = level_weights.find(level); it != level_weights.end()) w = it->second;
    if (!(w >= 0.0)) throw ValidationError("level weights must be >= 0");
    if (w == 0.0) continue;
    total += w;
    levels_.push_back(level);
    cumulative_.push_back(total);
  }
  if (!episodes_.empty() && levels_.empty()) throw ValidationError("every task level has zero weight");
  for (double& c : cumulative_) c /= total;
}

const TaskEpisode& TaskSampler::sample(Rng& rng) const {
  if (episodes_.empty()) throw ValidationError("task sampler is empty");
  const double u = rng.uniform(0.0, 1.0);
  std::size_t k = 0;
  while (k + 1 < cumulative_.size() && u >= cumulative_[k]) ++k;
  const auto& members = by_level_.at(levels_[k]);
  return episodes_[members[rng.index(members.size())]];
}

MetaResult meta_train(const PromptGraph& prompt, const TaskHead& head, const TaskSampler& sampler,
                      const BackboneModel& frozen_model, const MetaConfig& config, const MetaStepCallback& on_step) {
  validate(config);
  if (sampler.size() == 0) throw ValidationError("meta-training needs a non-empty task sampler");
  if (!frozen_model.frozen()) throw ContractError("meta-training requires a frozen backbone");

  PromptedModel shared{frozen_model, prompt, head};
  std::vector<Matrix> params = gather_parameters(shared, kPromptAndHead);
  Optimizer outer(OptimizerKind::adam, config.outer_lr);
  Rng rng(derive_seed(config.seed, "meta"));
  MetaResult result{prompt, head, {}};

  for (int step = 0; step < config.outer_steps; ++step) {
    scatter_parameters(shared, kPromptAndHead, params);
    std::vector<Matrix> mean_grad;
    double mean_loss = 0.0;
    const int batch = config.meta_batch;
    for (int b = 0; b < batch; ++b) {
      const TaskEpisode& ep = sampler.sample(rng);
      if (ep.query.empty()) throw ValidationError("meta-training episode has no query examples");
      const AdaptResult a = inner_adapt(*shared.prompt, shared.head, ep, frozen_model, config.inner_steps,
                                        config.inner_lr);
      std::vector<Matrix> grads;
      const double loss = task_loss(PromptedModel{frozen_model, a.prompt, a.head}, kPromptAndHead, ep.query, &grads);
      if (!std::isfinite(loss)) throw NumericError("query loss is not finite at outer step " + std::to_string(step));
      mean_loss += loss / batch;
      if (mean_grad.empty()) {
        for (const Matrix& g : grads) mean_grad.push_back(g / batch);
      } else {
        for (std::size_t i = 0; i < grads.size(); ++i) mean_grad[i] += grads[i] / batch;
      }
    }
    result.outer_loss_trace.push_back(mean_loss);
    if (on_step) on_step(step, mean_loss);
    outer.step(params, mean_grad);
  }
  scatter_parameters(shared, kPromptAndHead, params);
  result.prompt = *shared.prompt;
  result.head = shared.head;
  return result;
}

}  // namespace gprompt
