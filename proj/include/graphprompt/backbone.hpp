#pragma once

#include "graphprompt/autograd.hpp"
#include "graphprompt/graph.hpp"
#include "graphprompt/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gprompt {

enum class Activation { relu, tanh, identity };
enum class Readout { mean, sum };

std::string to_string(Activation a);
std::string to_string(Readout r);
Activation parse_activation(const std::string& s);
Readout parse_readout(const std::string& s);

struct BackboneConfig {
  int input_dim = 0;
  int hidden_dim = 100;
  int depth = 2;
  Activation activation = Activation::relu;
  Readout readout = Readout::mean;
};

nlohmann::json to_json(const BackboneConfig& c);
BackboneConfig backbone_config_from_json(const nlohmann::json& j);

// GCN encoder: per layer H <- act(Â H W_l), then a mean/sum readout over node rows.
class BackboneModel {
 public:
  BackboneModel(BackboneConfig config, std::vector<Matrix> weights);

  const BackboneConfig& config() const { return config_; }
  const std::vector<Matrix>& weights() const { return weights_; }

  // Throws ContractError when the model is frozen.
  std::vector<Matrix>& mutable_weights();
  void set_weights(std::vector<Matrix> weights);

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }

  // Content hash of the configuration and every weight.
  std::uint64_t fingerprint() const;

 private:
  BackboneConfig config_;
  std::vector<Matrix> weights_;
  bool frozen_ = false;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
BackboneModel init_backbone(int input_dim, int hidden_dim, int depth, Activation activation, Readout readout, Rng& rng);
BackboneModel init_backbone(const BackboneConfig& config, Rng& rng);

// D^{-1/2}(A+I)D^{-1/2} for a graph.
Matrix normalized_adjacency(const Graph& graph);

struct Embedding {
  Matrix nodes;     // N × d_h
  RowVector graph;  // 1 × d_h
};

Embedding forward(const BackboneModel& model, const Graph& graph);

// Differentiable encoder pass on a tape. `weights` are tape variables (parameters or
// constants) matching the model layers. Returns the 1×d_h graph embedding.
ad::Var encode(const BackboneConfig& config, const std::vector<ad::Var>& weights, ad::Var features,
               ad::Var norm_adjacency);

void save_backbone(const BackboneModel& model, const std::filesystem::path& path);
BackboneModel load_backbone(const std::filesystem::path& path);

}  // namespace gprompt
