#pragma once

// First-order meta-learning of a prompt (and head) initialization over a task
// distribution.

#include "graphprompt/backbone.hpp"
#include "graphprompt/episode.hpp"
#include "graphprompt/prompt.hpp"
#include "graphprompt/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

namespace gprompt {

struct MetaConfig {
  int inner_steps = 5;
  double inner_lr = 0.01;
  double outer_lr = 0.001;
  int meta_batch = 4;
  int outer_steps = 100;
  bool first_order = true;
  std::uint64_t seed = 0;
};

// Throws ValidationError; second-order meta-gradients are not implemented.
void validate(const MetaConfig& c);
nlohmann::json to_json(const MetaConfig& c);

struct AdaptResult {
  PromptGraph prompt;
  TaskHead head;
  std::vector<double> support_loss_trace;  // steps + 1 entries
};

// `steps` plain gradient-descent updates of copies of (prompt, head) on the episode's
// support loss. Returns the best iterate; the inputs are never modified.
AdaptResult inner_adapt(const PromptGraph& prompt, const TaskHead& head, const TaskEpisode& episode,
                        const BackboneModel& frozen_model, int steps, double lr);

// Draws episodes: a level uniformly (or by `level_weights`) among the levels present,
// then an episode of that level uniformly.
class TaskSampler {
 public:
  explicit TaskSampler(std::vector<TaskEpisode> episodes, std::map<TaskKind, double> level_weights = {});
  const TaskEpisode& sample(Rng& rng) const;
  std::size_t size() const { return episodes_.size(); }
  const std::vector<TaskEpisode>& episodes() const { return episodes_; }

 private:
  std::vector<TaskEpisode> episodes_;
  std::vector<TaskKind> levels_;
  std::vector<double> cumulative_;
  std::map<TaskKind, std::vector<std::size_t>> by_level_;
};

struct MetaResult {
  PromptGraph prompt;
  TaskHead head;
  std::vector<double> outer_loss_trace;  // mean query loss before each outer update
};

using MetaStepCallback = std::function<void(int outer_step, double mean_query_loss)>;

// Each outer step adapts the shared initialization to `meta_batch` sampled episodes,
// takes the query-loss gradient at the adapted parameters (first-order), averages it in
// sampling order and applies one Adam update with `outer_lr`. Returns the final
// initialization. Throws ValidationError for an empty sampler.
MetaResult meta_train(const PromptGraph& prompt, const TaskHead& head, const TaskSampler& sampler,
                      const BackboneModel& frozen_model, const MetaConfig& config,
                      const MetaStepCallback& on_step = {});

// Mean query loss of an episode after adapting (prompt, head) on its support set.
double adapted_query_loss(const PromptGraph& prompt, const TaskHead& head, const TaskEpisode& episode,
                          const BackboneModel& frozen_model, int steps, double lr);

}  // namespace gprompt
