#include "graphprompt/pretrain.hpp"

#include "graphprompt/errors.hpp"
#include "graphprompt/optim.hpp"

#include <cmath>
#include <numeric>

namespace gprompt {

std::string to_string(PretrainObjective o) { return o == PretrainObjective::graphcl ? "graphcl" : "simgrace"; }

PretrainObjective parse_objective(const std::string& s) {
  if (s == "graphcl") return PretrainObjective::graphcl;
  if (s == "simgrace") return PretrainObjective::simgrace;
  throw ValidationError("unknown pre-training objective '" + s + "'");
}

void validate(const PretrainConfig& c) {
  if (!(c.temperature > 0.0)) throw ValidationError("temperature must be > 0");
  if (c.perturbation_scale < 0.0) throw ValidationError("perturbation scale must be >= 0");
  if (c.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  for (const auto& v : {c.view_a, c.view_b}) {
    if (!(v.ratio >= 0.0 && v.ratio <= 1.0)) throw ValidationError("augmentation ratio must lie in [0, 1]");
  }
}

nlohmann::json to_json(const PretrainConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"temperature", c.temperature},
          {"learning_rate", c.learning_rate},
          {"view_a", {to_string(c.view_a.kind), c.view_a.ratio}},
          {"view_b", {to_string(c.view_b.kind), c.view_b.ratio}},
          {"perturbation_scale", c.perturbation_scale},
          {"seed", c.seed}};
}

ad::Var nt_xent(ad::Var z_a, ad::Var z_b, double temperature, double min_norm) {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  if (z_a.rows() != z_b.rows() || z_a.cols() != z_b.cols()) throw ValidationError("nt_xent: view shapes differ");
  if (z_a.rows() < 1) throw ValidationError("nt_xent: empty batch");
  const int b = static_cast<int>(z_a.rows());
  ad::Var z = ad::normalize_rows(ad::vstack({z_a, z_b}), min_norm);
  ad::Var sim = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / temperature);
  std::vector<int> positives(static_cast<std::size_t>(2 * b));
  for (int i = 0; i < b; ++i) {
    positives[static_cast<std::size_t>(i)] = i + b;
    positives[static_cast<std::size_t>(i + b)] = i;
  }
  return ad::softmax_cross_entropy(sim, positives, /*exclude_diagonal=*/true);
}

double nt_xent_loss(const Matrix& z_a, const Matrix& z_b, double temperature) {
  ad::Tape tape;
  return nt_xent(tape.constant(z_a), tape.constant(z_b), temperature).value()(0, 0);
}

double contrastive_loss(const BackboneConfig& config, const std::vector<Matrix>& weights,
                        const std::vector<Graph>& view_a, const std::vector<Graph>& view_b, double temperature,
                        std::vector<Matrix>* grads, const std::vector<Matrix>* view_b_weights) {
  if (view_a.size() != view_b.size() || view_a.empty()) throw ValidationError("contrastive_loss: bad batch");
  ad::Tape tape;
  std::vector<ad::Var> w;
  for (const Matrix& m : weights) w.push_back(grads ? tape.parameter(m) : tape.constant(m));
  std::vector<ad::Var> w_b = w;
  if (view_b_weights) {
    w_b.clear();
    for (const Matrix& m : *view_b_weights) w_b.push_back(tape.constant(m));
  }
  std::vector<ad::Var> za, zb;
  for (std::size_t i = 0; i < view_a.size(); ++i) {
    za.push_back(encode(config, w, tape.constant(view_a[i].features()),
                        tape.constant(normalized_adjacency(view_a[i]))));
    zb.push_back(encode(config, w_b, tape.constant(view_b[i].features()),
                        tape.constant(normalized_adjacency(view_b[i]))));
  }
  ad::Var loss = nt_xent(ad::vstack(za), ad::vstack(zb), temperature, kEmbeddingNormFloor);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) throw NumericError("contrastive loss is not finite");
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const ad::Var& v : w) grads->push_back(tape.grad(v));
  }
  return value;
}

std::vector<Matrix> perturb_weights(const std::vector<Matrix>& weights, double eta, Rng& rng) {
  std::vector<Matrix> out;
  for (const Matrix& w : weights) {
    const double mean = w.mean();
    const double var = (w.array() - mean).square().mean();
    const double scale = eta * std::sqrt(var);
    Matrix p = w;
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) += scale * rng.normal(0.0, 1.0);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, int batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A singleton batch has no negatives; fold it into its predecessor.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

PretrainResult run_pretraining(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                               PretrainObjective objective, const EpochCallback& on_epoch) {
  validate(config);
  if (model.frozen()) throw ValidationError("cannot pre-train a frozen backbone");
  if (dataset.graphs.empty()) throw ValidationError("cannot pre-train on an empty dataset");
  if (dataset.feature_dim != model.config().input_dim) {
    throw ValidationError("dataset feature dimension does not match the backbone");
  }

  PretrainResult result{model, {}, {}};
  std::vector<Matrix> weights = model.weights();
  Optimizer opt(OptimizerKind::adam, config.learning_rate);
  Rng rng(derive_seed(config.seed, "pretrain"));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.graphs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double total = 0.0;
    const auto batches = make_batches(order, config.batch_size);
    for (const auto& batch : batches) {
      std::vector<Graph> va, vb;
      std::vector<Matrix> perturbed;
      for (std::size_t gi : batch) {
        const Graph& g = dataset.graphs[gi];
        if (objective == PretrainObjective::graphcl) {
          va.push_back(augment(g, config.view_a.kind, config.view_a.ratio, rng));
          vb.push_back(augment(g, config.view_b.kind, config.view_b.ratio, rng));
        } else {
          va.push_back(g);
          vb.push_back(g);
        }
      }
      if (objective == PretrainObjective::simgrace) perturbed = perturb_weights(weights, config.perturbation_scale, rng);
      std::vector<Matrix> grads;
      const double loss = contrastive_loss(model.config(), weights, va, vb, config.temperature, &grads,
                                           objective == PretrainObjective::simgrace ? &perturbed : nullptr);
      opt.step(weights, grads);
      result.step_losses.push_back(loss);
      total += loss;
    }
    const double mean_loss = total / static_cast<double>(batches.size());
    result.epoch_losses.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  result.model.set_weights(std::move(weights));
  return result;
}

}  // namespace

PretrainResult pretrain_graphcl(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                                const EpochCallback& on_epoch) {
  return run_pretraining(dataset, model, config, PretrainObjective::graphcl, on_epoch);
}

PretrainResult pretrain_simgrace(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                                 const EpochCallback& on_epoch) {
  return run_pretraining(dataset, model, config, PretrainObjective::simgrace, on_epoch);
}

PretrainResult pretrain(const Dataset& dataset, const BackboneModel& model, const PretrainConfig& config,
                        const EpochCallback& on_epoch) {
  return run_pretraining(dataset, model, config, config.objective, on_epoch);
}

}  // namespace gprompt
