#pragma once

#include "graphprompt/backbone.hpp"
#include "graphprompt/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gprompt {

enum class PretrainObjective { graphcl, simgrace };

std::string to_string(PretrainObjective o);
PretrainObjective parse_objective(const std::string& s);

struct AugmentationSpec {
  Augmentation kind = Augmentation::identity;
  double ratio = 0.0;
};

struct PretrainConfig {
  PretrainObjective objective = PretrainObjective::graphcl;
  int epochs = 50;
  int batch_size = 32;
  double temperature = 0.5;
  double learning_rate = 1e-3;
  AugmentationSpec view_a{Augmentation::drop_edges, 0.2};
  AugmentationSpec view_b{Augmentation::mask_features, 0.2};
  double perturbation_scale = 1.0;  // SimGRACE eta
  std::uint64_t seed = 0;
};

void validate(const PretrainConfig& c);
nlohmann::json to_json(const PretrainConfig& c);

// NT-Xent over paired rows of z_a and z_b (both B × d). Rows are L2-normalized first.
// Throws NumericError on a zero-norm row and ValidationError when temperature <= 0.
double nt_xent_loss(const Matrix& z_a, const Matrix& z_b, double temperature);

// Differentiable NT-Xent on a tape. A positive `min_norm` floors row norms instead of
// rejecting zero rows.
ad::Var nt_xent(ad::Var z_a, ad::Var z_b, double temperature, double min_norm = 0.0);

// Norm floor used during pre-training, where a ReLU encoder can emit an all-zero
// graph embedding.
inline constexpr double kEmbeddingNormFloor = 1e-12;

// Contrastive loss of a batch of paired views and its gradient w.r.t. `weights`.
// View b is encoded with `view_b_weights` when given (held constant), otherwise with
// `weights`.
double contrastive_loss(const BackboneConfig& config, const std::vector<Matrix>& weights,
                        const std::vector<Graph>& view_a, const std::vector<Graph>& view_b, double temperature,
                        std::vector<Matrix>* grads, const std::vector<Matrix>* view_b_weights = nullptr);

// Weights perturbed by eta * std(W_l) * N(0, 1) per entry.
std::vector<Matrix> perturb_weights(const std::vector<Matrix>& weights, double eta, Rng& rng);

struct PretrainResult {
  BackboneModel model;
  std::vector<double> epoch_losses;
  std::vector<double> step_losses;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Both return an unfrozen model; the caller freezes it.
PretrainResult pretrain_graphcl(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                                const EpochCallback& on_epoch = {});
PretrainResult pretrain_simgrace(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                                 const EpochCallback& on_epoch = {});
PretrainResult pretrain(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                        const EpochCallback& on_epoch = {});

}  // namespace gprompt
