#include "graphprompt/errorlab.hpp"
#include "graphprompt/errors.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace gprompt {
namespace {

using testing_support::random_graph;

struct Lab {
  BackboneModel model;
  std::vector<Graph> graphs;
};

Lab make_lab(std::uint64_t seed, int count) {
  Rng rng(seed);
  BackboneModel m = init_backbone(4, 8, 2, Activation::relu, Readout::mean, rng);
  m.freeze();
  std::vector<Graph> gs;
  for (int i = 0; i < count; ++i) gs.push_back(random_graph(rng, 10 + i, 0.3, 4, 1.0));
  return {m, gs};
}

TEST(ImitationError, IdentityWithoutPromptIsZero) {
  Lab lab = make_lab(1, 1);
  EXPECT_EQ(imitation_error(lab.model, lab.graphs[0], {Augmentation::identity, 0.0, 3}), 0.0);
}

TEST(ImitationError, ZeroTokensAreTheIdentity) {
  Lab lab = make_lab(2, 1);
  Rng rng(1);
  PromptGraph p = init_prompt(3, 4, StructureMode::learnable, InsertMode::weighted_feature_add, 0.5, rng);
  p.tokens.setZero();
  EXPECT_EQ(imitation_error(lab.model, lab.graphs[0], {Augmentation::identity, 0.2, 3}, p), 0.0);
}

TEST(ImitationError, MatchesIndependentRecomputation) {
  Rng rng(3);
  BackboneModel m = init_backbone(4, 8, 2, Activation::relu, Readout::mean, rng);
  m.freeze();
  const Graph g = random_graph(rng, 20, 0.25, 4, 1.0);
  const Transformation t{Augmentation::drop_edges, 0.2, 77};

  Rng same(77);
  const Graph dropped = augment(g, Augmentation::drop_edges, 0.2, same);
  ASSERT_EQ(dropped.edges().size(), g.edges().size() - static_cast<std::size_t>(0.2 * g.edges().size()));
  auto embed = [&](const Graph& x) {
    Matrix h = x.features();
    const Matrix a = normalized_adjacency(x);
    for (const Matrix& w : m.weights()) h = (a * h * w).cwiseMax(0.0);
    return RowVector(h.colwise().mean());
  };
  const RowVector diff = embed(g) - embed(dropped);
  EXPECT_NEAR(imitation_error(m, g, t), std::sqrt(diff.squaredNorm()), 1e-12);
  EXPECT_GT(imitation_error(m, g, t), 0.0);
}

TEST(ImitationError, RejectsMismatchAndUnfrozen) {
  Lab lab = make_lab(4, 1);
  Rng rng(1);
  const PromptGraph wrong = init_prompt(2, 5, StructureMode::independent, InsertMode::simple_feature_add, 0.5, rng);
  EXPECT_THROW(imitation_error(lab.model, lab.graphs[0], {}, wrong), ValidationError);
  const Graph wide = random_graph(rng, 6, 0.5, 3, 1.0);
  EXPECT_THROW(imitation_error(lab.model, wide, {}), ValidationError);
  BackboneModel open = lab.model;
  open.unfreeze();
  EXPECT_THROW(imitation_error(open, lab.graphs[0], {}), ContractError);
}

TEST(LearnImitation, IdentityIsReachable) {
  Lab lab = make_lab(5, 3);
  ImitationConfig c;
  c.tune = {300, 0.01, OptimizerKind::adam};
  const ImitationResult r = learn_imitation_prompt(lab.model, lab.graphs, {Augmentation::identity, 0.0, 1}, 2, c);
  EXPECT_EQ(r.no_prompt_error, 0.0);
  EXPECT_LE(r.final_error, 1e-6);
}

TEST(LearnImitation, ZeroStepsKeepsInitialError) {
  Lab lab = make_lab(6, 3);
  ImitationConfig c;
  c.tune.steps = 0;
  const ImitationResult r = learn_imitation_prompt(lab.model, lab.graphs, {Augmentation::drop_nodes, 0.2, 1}, 3, c);
  EXPECT_EQ(r.final_error, r.initial_error);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0], r.initial_error);
}

TEST(LearnImitation, BestIterateAndReductionDefinition) {
  Lab lab = make_lab(7, 4);
  for (PromptSharing sharing : {PromptSharing::per_graph, PromptSharing::shared}) {
    ImitationConfig c;
    c.tune = {40, 0.01, OptimizerKind::adam};
    c.sharing = sharing;
    const Transformation t{Augmentation::mask_features, 0.3, 9};
    const ImitationResult r = learn_imitation_prompt(lab.model, lab.graphs, t, 2, c);
    EXPECT_LE(r.final_error, r.initial_error);
    EXPECT_EQ(r.trace.size(), 41u);
    EXPECT_LT(r.final_error, r.no_prompt_error);
    EXPECT_DOUBLE_EQ(r.no_prompt_error, mean_imitation_error(lab.model, lab.graphs, t));
    EXPECT_NEAR(r.red_percent, 100.0 * (1.0 - r.final_error / r.no_prompt_error), 1e-12);
    if (sharing == PromptSharing::shared) {
      EXPECT_EQ(r.final_error, *std::min_element(r.trace.begin(), r.trace.end()));
    }
  }
}

TEST(LearnImitation, RejectsEmptySetsAndZeroTokens) {
  Lab lab = make_lab(8, 2);
  ImitationConfig c;
  EXPECT_THROW(learn_imitation_prompt(lab.model, {}, {}, 1, c), ValidationError);
  EXPECT_THROW(learn_imitation_prompt(lab.model, lab.graphs, {}, 0, c), ValidationError);
}

TEST(ErrorTable, LayoutAndNoPromptRow) {
  Lab lab = make_lab(9, 3);
  ImitationConfig c;
  c.tune = {10, 0.01, OptimizerKind::adam};
  const std::vector<Augmentation> kinds{Augmentation::drop_nodes, Augmentation::drop_edges, Augmentation::mask_features};
  const ErrorTable t = error_reduction_table(lab.model, lab.graphs, {1, 3}, kinds, 0.2, 5, c);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].solution, "naive");
  EXPECT_EQ(t.rows[0].num_tokens, 1);
  EXPECT_EQ(t.rows[0].cells[0].insert_mode, InsertMode::simple_feature_add);
  EXPECT_EQ(t.rows[2].solution, "prompt_graph");
  EXPECT_EQ(t.rows[2].num_tokens, 3);
  ASSERT_EQ(t.no_prompt.size(), 3u);
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    // the row is a plain average of direct per-graph calls
    double direct = 0.0;
    for (std::size_t i = 0; i < lab.graphs.size(); ++i) {
      const Transformation base{kinds[j], 0.2, derive_seed(5, to_string(kinds[j]))};
      direct += imitation_error(lab.model, lab.graphs[i], for_graph(base, i)) / 3.0;
    }
    EXPECT_NEAR(t.no_prompt[j], direct, 1e-12);
    for (const ErrorTableRow& row : t.rows) EXPECT_DOUBLE_EQ(row.cells[j].no_prompt_error, t.no_prompt[j]);
  }
  for (const ErrorTableRow& row : t.rows) {
    double mean = 0.0;
    for (const ImitationResult& cell : row.cells) mean += cell.red_percent / 3.0;
    EXPECT_NEAR(row.red_percent, mean, 1e-12);
  }
  const std::string md = render_markdown(t);
  EXPECT_NE(md.find("| without prompt | 0 |"), std::string::npos);
  EXPECT_NE(md.find("| prompt graph | 3 |"), std::string::npos);
  EXPECT_EQ(to_json(t)["rows"].size(), 3u);
}

TEST(ErrorTable, ThreadCountDoesNotChangeResults) {
  Lab lab = make_lab(10, 2);
  ImitationConfig c;
  c.tune = {8, 0.01, OptimizerKind::adam};
  const std::vector<Augmentation> kinds{Augmentation::drop_edges, Augmentation::mask_features};
  const ErrorTable one = error_reduction_table(lab.model, lab.graphs, {2}, kinds, 0.2, 1, c);
  c.threads = 3;
  const ErrorTable three = error_reduction_table(lab.model, lab.graphs, {2}, kinds, 0.2, 1, c);
  EXPECT_EQ(to_json(one).dump(), to_json(three).dump());
}

}  // namespace
}  // namespace gprompt
