#include "graphprompt/backbone.hpp"

#include "graphprompt/checkpoint.hpp"
#include "graphprompt/errors.hpp"

#include <cmath>

namespace gprompt {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

std::string to_string(Readout r) { return r == Readout::mean ? "mean" : "sum"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + s + "'");
}

Readout parse_readout(const std::string& s) {
  if (s == "mean") return Readout::mean;
  if (s == "sum") return Readout::sum;
  throw ValidationError("unknown readout '" + s + "'");
}

nlohmann::json to_json(const BackboneConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_dim", c.hidden_dim},
          {"depth", c.depth},
          {"activation", to_string(c.activation)},
          {"readout", to_string(c.readout)}};
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.readout = parse_readout(j.at("readout").get<std::string>());
  return c;
}

namespace {

void check_shapes(const BackboneConfig& c, const std::vector<Matrix>& w) {
  if (c.input_dim < 1 || c.hidden_dim < 1 || c.depth < 1) {
    throw ValidationError("backbone dimensions and depth must be >= 1");
  }
  if (static_cast<int>(w.size()) != c.depth) throw ValidationError("backbone weight count must equal depth");
  for (int l = 0; l < c.depth; ++l) {
    const Matrix& m = w[static_cast<std::size_t>(l)];
    const int in = l == 0 ? c.input_dim : c.hidden_dim;
    if (m.rows() != in || m.cols() != c.hidden_dim) {
      throw ValidationError("backbone layer " + std::to_string(l) + " has the wrong shape");
    }
  }
}

Matrix activate(Activation a, const Matrix& x) {
  switch (a) {
    case Activation::relu: return x.cwiseMax(0.0);
    case Activation::tanh: return x.array().tanh().matrix();
    case Activation::identity: return x;
  }
  return x;
}

}  // namespace

BackboneModel::BackboneModel(BackboneConfig config, std::vector<Matrix> weights)
    : config_(config), weights_(std::move(weights)) {
  check_shapes(config_, weights_);
}

std::vector<Matrix>& BackboneModel::mutable_weights() {
  if (frozen_) throw ContractError("backbone is frozen; weights are read-only");
  return weights_;
}

void BackboneModel::set_weights(std::vector<Matrix> weights) {
  if (frozen_) throw ContractError("backbone is frozen; weights are read-only");
  check_shapes(config_, weights);
  weights_ = std::move(weights);
}

std::uint64_t BackboneModel::fingerprint() const {
  Matrix cfg(1, 5);
  cfg << config_.input_dim, config_.hidden_dim, config_.depth, static_cast<double>(config_.activation),
      static_cast<double>(config_.readout);
  std::vector<Matrix> all{cfg};
  all.insert(all.end(), weights_.begin(), weights_.end());
  return content_hash(all);
}

BackboneModel init_backbone(int input_dim, int hidden_dim, int depth, Activation activation, Readout readout,
                            Rng& rng) {
  return init_backbone(BackboneConfig{input_dim, hidden_dim, depth, activation, readout}, rng);
}

BackboneModel init_backbone(const BackboneConfig& config, Rng& rng) {
  if (config.input_dim < 1 || config.hidden_dim < 1 || config.depth < 1) {
    throw ValidationError("backbone dimensions and depth must be >= 1");
  }
  std::vector<Matrix> weights;
  for (int l = 0; l < config.depth; ++l) {
    const int in = l == 0 ? config.input_dim : config.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(in, config.hidden_dim);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-bound, bound);
    weights.push_back(std::move(w));
  }
  return BackboneModel(config, std::move(weights));
}

Matrix normalized_adjacency(const Graph& graph) {
  const int n = graph.node_count();
  Vector deg = Vector::Ones(n);
  for (const Edge& e : graph.edges()) {
    deg(e.u) += 1.0;
    deg(e.v) += 1.0;
  }
  Vector s = deg.array().rsqrt().matrix();
  Matrix a = s.cwiseProduct(s).asDiagonal();
  for (const Edge& e : graph.edges()) {
    const double w = s(e.u) * s(e.v);
    a(e.u, e.v) = w;
    a(e.v, e.u) = w;
  }
  return a;
}

Embedding forward(const BackboneModel& model, const Graph& graph) {
  const BackboneConfig& c = model.config();
  if (graph.feature_dim() != c.input_dim) {
    throw ValidationError("graph feature dimension " + std::to_string(graph.feature_dim()) +
                          " does not match backbone input dimension " + std::to_string(c.input_dim));
  }
  if (graph.node_count() == 0) throw ValidationError("cannot encode an empty graph");
  if (!graph.features().allFinite()) throw NumericError("non-finite value in node features");

  const Matrix adj = normalized_adjacency(graph);
  Matrix h = graph.features();
  for (const Matrix& w : model.weights()) h = activate(c.activation, adj * (h * w));
  RowVector g = h.colwise().sum();
  if (c.readout == Readout::mean) g /= static_cast<double>(h.rows());
  return Embedding{std::move(h), std::move(g)};
}

ad::Var encode(const BackboneConfig& config, const std::vector<ad::Var>& weights, ad::Var features,
               ad::Var norm_adjacency) {
  if (features.cols() != config.input_dim) throw ValidationError("encoder input dimension mismatch");
  ad::Var h = features;
  for (const ad::Var& w : weights) {
    ad::Var z = ad::matmul(norm_adjacency, ad::matmul(h, w));
    switch (config.activation) {
      case Activation::relu: h = ad::relu(z); break;
      case Activation::tanh: h = ad::tanh(z); break;
      case Activation::identity: h = z; break;
    }
  }
  return config.readout == Readout::mean ? ad::mean_rows(h) : ad::sum_rows(h);
}

void save_backbone(const BackboneModel& model, const std::filesystem::path& path) {
  Checkpoint cp;
  cp.config = to_json(model.config());
  cp.config["fingerprint"] = hex64(model.fingerprint());
  cp.config["frozen"] = model.frozen();
  cp.arrays = model.weights();
  write_checkpoint(path, "backbone", cp);
}

BackboneModel load_backbone(const std::filesystem::path& path) {
  Checkpoint cp = read_checkpoint(path, "backbone");
  BackboneConfig config;
  try {
    config = backbone_config_from_json(cp.config);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": bad backbone config: " + e.what());
  }
  BackboneModel model(config, std::move(cp.arrays));
  if (cp.config.contains("fingerprint") && cp.config["fingerprint"].get<std::string>() != hex64(model.fingerprint())) {
    throw ChecksumError(path.string() + ": fingerprint mismatch");
  }
  if (cp.config.value("frozen", false)) model.freeze();
  return model;
}

}  // namespace gprompt
