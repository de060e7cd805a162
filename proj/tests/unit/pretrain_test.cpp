#include "graphprompt/errors.hpp"
#include "graphprompt/pretrain.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace gprompt {
namespace {

using testing_support::finite_difference;
using testing_support::random_graph;
using testing_support::random_matrix;
using testing_support::relative_error;

// Direct evaluation of the NT-Xent definition, anchor by anchor.
double nt_xent_oracle(const Matrix& a, const Matrix& b, double tau) {
  const Eigen::Index n = a.rows();
  Matrix z(2 * n, a.cols());
  z << a, b;
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) /= z.row(i).norm();
  double total = 0.0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const Eigen::Index pos = i < n ? i + n : i - n;
    double denom = 0.0;
    for (Eigen::Index j = 0; j < 2 * n; ++j)
      if (j != i) denom += std::exp(z.row(i).dot(z.row(j)) / tau);
    total += -std::log(std::exp(z.row(i).dot(z.row(pos)) / tau) / denom);
  }
  return total / static_cast<double>(2 * n);
}

Dataset small_corpus(std::uint64_t seed, int per_class = 10) {
  GeneratorSpec spec;
  spec.graphs_per_class = per_class;
  spec.min_nodes = 6;
  spec.max_nodes = 12;
  spec.feature_dim = 4;
  Rng rng(seed);
  return synthesize_dataset(spec, rng);
}

TEST(NtXent, HandValue) {
  const Matrix eye = Matrix::Identity(2, 2);
  EXPECT_NEAR(nt_xent_loss(eye, eye, 1.0), -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0)), 1e-12);
  EXPECT_NEAR(nt_xent_loss(eye, eye, 1.0), 0.5514, 5e-5);
}

TEST(NtXent, MatchesOracleAndIsNonNegative) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(rng, 5, 3);
    const Matrix b = random_matrix(rng, 5, 3);
    const double v = nt_xent_loss(a, b, 0.5);
    EXPECT_NEAR(v, nt_xent_oracle(a, b, 0.5), 1e-10);
    EXPECT_GE(v, 0.0);
  }
}

TEST(NtXent, PairPermutationInvariant) {
  Rng rng(2);
  const Matrix a = random_matrix(rng, 4, 3);
  const Matrix b = random_matrix(rng, 4, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(4);
  p.indices() << 2, 0, 3, 1;
  EXPECT_NEAR(nt_xent_loss(p * a, p * b, 0.7), nt_xent_loss(a, b, 0.7), 1e-12);
}

TEST(NtXent, MonotoneInPositiveSimilarity) {
  // Anchor 0 rotates onto its positive; no other similarity grows along the path.
  Matrix b(2, 2);
  b << 1, 0, 0, 1;
  double previous = std::numeric_limits<double>::infinity();
  for (double angle = 1.5; angle >= 0.0; angle -= 0.1) {
    Matrix a(2, 2);
    a << std::cos(angle), std::sin(angle), 0, 1;
    const double v = nt_xent_loss(a, b, 0.5);
    EXPECT_LT(v, previous);
    previous = v;
  }
}

TEST(NtXent, RejectsBadInput) {
  EXPECT_THROW(nt_xent_loss(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 1.0), NumericError);
  EXPECT_THROW(nt_xent_loss(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 0.0), ValidationError);
}

TEST(Pretrain, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    const BackboneModel m = init_backbone(3, 4, 2, Activation::tanh, Readout::mean, rng);
    std::vector<Graph> va, vb;
    for (int i = 0; i < 3; ++i) {
      const Graph g = random_graph(rng, 3 + static_cast<int>(rng.index(6)), 0.4, 3);
      va.push_back(augment(g, Augmentation::drop_edges, 0.2, rng));
      vb.push_back(augment(g, Augmentation::mask_features, 0.2, rng));
    }
    const LossFunction loss = [&](const std::vector<Matrix>& w, std::vector<Matrix>* g) {
      return contrastive_loss(m.config(), w, va, vb, 0.5, g);
    };
    std::vector<Matrix> analytic;
    loss(m.weights(), &analytic);
    EXPECT_LT(relative_error(analytic, finite_difference(loss, m.weights())), 1e-4);
  }
}

TEST(Pretrain, ZeroEpochsIsNoOp) {
  const Dataset d = small_corpus(4);
  Rng rng(5);
  const BackboneModel m = init_backbone(4, 8, 2, Activation::relu, Readout::mean, rng);
  PretrainConfig c;
  c.epochs = 0;
  EXPECT_EQ(pretrain_graphcl(d, m, c).model.fingerprint(), m.fingerprint());
  c.objective = PretrainObjective::simgrace;
  EXPECT_EQ(pretrain(d, m, c).model.fingerprint(), m.fingerprint());
}

TEST(Pretrain, GraphclLossDecreasesAndIsDeterministic) {
  const Dataset d = small_corpus(6);
  Rng rng(7);
  const BackboneModel m = init_backbone(4, 16, 2, Activation::relu, Readout::mean, rng);
  PretrainConfig c;
  c.epochs = 50;
  c.batch_size = 10;
  c.learning_rate = 0.01;
  c.seed = 11;
  const PretrainResult a = pretrain_graphcl(d, m, c);
  ASSERT_EQ(a.epoch_losses.size(), 50u);
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());
  EXPECT_FALSE(a.model.frozen());
  EXPECT_EQ(pretrain_graphcl(d, m, c).model.fingerprint(), a.model.fingerprint());
}

TEST(Pretrain, SimgraceZeroPerturbationAlignsViews) {
  Rng rng(8);
  const BackboneModel m = init_backbone(3, 4, 2, Activation::relu, Readout::mean, rng);
  const std::vector<Matrix> same = perturb_weights(m.weights(), 0.0, rng);
  for (std::size_t l = 0; l < same.size(); ++l) EXPECT_EQ(same[l], m.weights()[l]);
}

TEST(Pretrain, SimgraceLossMostlyDecreases) {
  const Dataset d = small_corpus(9);
  Rng rng(10);
  const BackboneModel m = init_backbone(4, 16, 2, Activation::relu, Readout::mean, rng);
  PretrainConfig c;
  c.objective = PretrainObjective::simgrace;
  c.epochs = 50;
  c.batch_size = 20;
  c.learning_rate = 0.005;
  c.perturbation_scale = 0.1;
  c.seed = 12;
  const PretrainResult r = pretrain_simgrace(d, m, c);
  int decreases = 0;
  for (std::size_t e = 1; e < r.epoch_losses.size(); ++e) decreases += r.epoch_losses[e] < r.epoch_losses[e - 1];
  EXPECT_GE(decreases, 0.8 * static_cast<double>(r.epoch_losses.size() - 1));
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(Pretrain, RejectsFrozenOrEmpty) {
  const Dataset d = small_corpus(13);
  Rng rng(14);
  BackboneModel m = init_backbone(4, 4, 1, Activation::relu, Readout::mean, rng);
  PretrainConfig c;
  EXPECT_THROW(pretrain_graphcl(Dataset{}, m, c), ValidationError);
  m.freeze();
  EXPECT_THROW(pretrain_graphcl(d, m, c), ValidationError);
}

TEST(Pretrain, DatasetUntouched) {
  const Dataset d = small_corpus(15);
  const Dataset copy = d;
  Rng rng(16);
  const BackboneModel m = init_backbone(4, 4, 1, Activation::relu, Readout::mean, rng);
  PretrainConfig c;
  c.epochs = 2;
  pretrain_graphcl(d, m, c);
  for (std::size_t i = 0; i < d.graphs.size(); ++i) EXPECT_EQ(d.graphs[i], copy.graphs[i]);
}

}  // namespace
}  // namespace gprompt
