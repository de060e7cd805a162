#include "graphprompt/errors.hpp"
#include "graphprompt/experiment.hpp"

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

namespace gprompt {
namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "name": "small",
    "dataset": {"synthetic": {"level": "node", "num_classes": 2, "nodes_per_class": 30, "feature_dim": 4,
                              "p_intra": 0.3, "p_inter": 0.03},
                "seed": 3},
    "task": {"level": "node", "shots": 6, "query": 5, "hops": 1, "max_nodes": 12},
    "seeds": [0, 1],
    "schemes": ["supervised", "pretrain_finetune", "prompt"],
    "backbone": {"hidden_dim": 8},
    "pretrain": {"epochs": 2, "batch_size": 16, "max_graphs": 20},
    "prompt": {"num_tokens": 3},
    "tune": {"steps": 15},
    "finetune": {"steps": 15},
    "meta": {"outer_steps": 3, "tasks": 4, "shots": 2, "query": 2, "meta_batch": 2}
  })");
}

TEST(ExperimentConfig, DefaultsEchoAndRoundTrip) {
  const ExperimentConfig c = experiment_config_from_json(small_config());
  EXPECT_EQ(c.task.shots, 6);
  EXPECT_EQ(c.task.test_negatives, 100);
  EXPECT_EQ(c.prompt.insert_mode, InsertMode::weighted_feature_add);
  const nlohmann::json echo = to_json(c);
  EXPECT_EQ(to_json(experiment_config_from_json(echo)), echo);
  EXPECT_EQ(config_hash(c), config_hash(experiment_config_from_json(echo)));
  ExperimentConfig other = c;
  other.tune.steps = 16;
  EXPECT_NE(config_hash(c), config_hash(other));
}

TEST(ExperimentConfig, RejectsBadDocuments) {
  auto rejects = [](nlohmann::json j, const std::string& fragment) {
    try {
      experiment_config_from_json(j);
      ADD_FAILURE() << "accepted: " << j.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  nlohmann::json j = small_config();
  j["schemes"] = {"prompt", "magic"};
  rejects(j, "magic");
  j = small_config();
  j["tune"]["stpes"] = 3;
  rejects(j, "tune.stpes");
  j = small_config();
  j["task"]["level"] = "hyperedge";
  rejects(j, "task.level");
  j = small_config();
  j["task"]["level"] = "link";
  j["schemes"] = {"meta_prompt"};
  rejects(j, "meta_prompt");
  j = small_config();
  j["seeds"] = {1, 1};
  rejects(j, "seeds");
  j = small_config();
  j["metrics"] = {"mrr"};
  rejects(j, "mrr");
  j = small_config();
  j.erase("dataset");
  rejects(j, "dataset");
}

TEST(Improvement, MeanOverTheOtherRows) {
  std::vector<SchemeSummary> s{{"supervised", {{"acc", 74.0}}, {{"acc", 0.0}}, 1},
                               {"pretrain_finetune", {{"acc", 78.0}}, {{"acc", 0.0}}, 1},
                               {"prompt", {{"acc", 80.0}}, {{"acc", 0.0}}, 1}};
  EXPECT_DOUBLE_EQ(improvement_over_rest(s, "prompt").at("acc"), 4.0);

  std::vector<SchemeSummary> errors{{"supervised", {{"mae", 2.0}}, {}, 1}, {"prompt", {{"mae", 1.5}}, {}, 1}};
  EXPECT_DOUBLE_EQ(improvement_over_rest(errors, "prompt").at("mae"), 0.5);
  EXPECT_THROW(improvement_over_rest({s[2]}, "prompt"), ValidationError);
}

class SmallRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    report_ = new ResultsReport(run_experiment(experiment_config_from_json(small_config())));
  }
  static void TearDownTestSuite() { delete report_; }
  static ResultsReport* report_;
};
ResultsReport* SmallRun::report_ = nullptr;

TEST_F(SmallRun, PerSeedRowsCarryClassificationMetrics) {
  const ResultsReport& r = *report_;
  EXPECT_TRUE(r.complete);
  EXPECT_EQ(r.metric_names, (std::vector<std::string>{"acc", "auc", "f1"}));
  ASSERT_EQ(r.runs.size(), 6u);
  for (const RunRecord& run : r.runs) {
    EXPECT_TRUE(run.failure.empty());
    for (const char* m : {"acc", "auc", "f1"}) {
      ASSERT_TRUE(run.metrics.count(m));
      EXPECT_GE(run.metrics.at(m), 0.0);
      EXPECT_LE(run.metrics.at(m), 100.0);
    }
  }
  EXPECT_EQ(r.runs[0].scheme, "supervised");
  EXPECT_EQ(r.runs[3].seed, 1u);
  ASSERT_TRUE(r.improvement);
  ASSERT_EQ(r.backbone_fingerprints.size(), 2u);
  EXPECT_EQ(r.backbone_fingerprints[0].second.size(), 16u);
}

TEST_F(SmallRun, SummaryIsMeanAndSampleStd) {
  const ResultsReport& r = *report_;
  for (std::size_t k = 0; k < r.schemes.size(); ++k) {
    const double a = r.runs[k].metrics.at("acc"), b = r.runs[3 + k].metrics.at("acc");
    EXPECT_NEAR(r.summaries[k].mean.at("acc"), (a + b) / 2.0, 1e-12);
    EXPECT_NEAR(r.summaries[k].std.at("acc"), std::abs(a - b) / std::sqrt(2.0), 1e-12);
    EXPECT_EQ(r.summaries[k].completed, 2);
  }
}

TEST_F(SmallRun, ManifestsRecordOneQuerySetPerSeed) {
  const ResultsReport& r = *report_;
  ASSERT_EQ(r.manifests.size(), 2u);
  for (const nlohmann::json& m : r.manifests) {
    EXPECT_EQ(m.at("support").size(), 12u);
    EXPECT_EQ(m.at("query").size(), 10u);
    std::set<std::string> support;
    for (const auto& e : m.at("support")) support.insert(e.dump());
    for (const auto& e : m.at("query")) EXPECT_EQ(support.count(e.dump()), 0u);
  }
  EXPECT_NE(r.manifests[0].dump(), r.manifests[1].dump());
}

TEST_F(SmallRun, JsonAndMarkdownAgree) {
  const ResultsReport& r = *report_;
  const nlohmann::json j = to_json(r);
  const ResultsReport back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
  const std::string md = render_markdown(r);
  EXPECT_EQ(render_markdown(back), md);
  const double acc = j["summary"][2]["mean"]["acc"].get<double>();
  EXPECT_NE(md.find(fmt::format("| prompt | {:.2f} ±", acc)), std::string::npos) << md;
  EXPECT_NE(md.find("| IMP (%) |"), std::string::npos);
}

TEST_F(SmallRun, SameSeedsSameNumbersAcrossThreadCounts) {
  RunOptions opts;
  opts.threads = 2;
  const ResultsReport again = run_experiment(experiment_config_from_json(small_config()), opts);
  EXPECT_EQ(to_json(again).dump(), to_json(*report_).dump());
}

TEST_F(SmallRun, WritesReportFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "gp_experiment_test";
  std::filesystem::remove_all(dir);
  write_report(*report_, dir);
  for (const char* f : {"report.json", "report.md", "manifest_seed0.json", "manifest_seed1.json", "timing.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream in(dir / "report.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_FALSE(j.contains("wall_clock_seconds"));
  EXPECT_EQ(j["config_hash"], report_->config_hash);
  std::filesystem::remove_all(dir);
}

TEST(Experiment, MetaPromptAndLinkLevel) {
  nlohmann::json j = small_config();
  j["seeds"] = {4};
  j["schemes"] = {"prompt", "meta_prompt"};
  const ResultsReport meta = run_experiment(experiment_config_from_json(j));
  ASSERT_EQ(meta.runs.size(), 2u);
  EXPECT_TRUE(meta.complete);
  EXPECT_FALSE(meta.improvement);  // no non-prompt row

  j["task"] = {{"level", "link"}, {"shots", 4}, {"query", 3}, {"hops", 1}, {"max_nodes", 10}, {"test_negatives", 9}};
  j["schemes"] = {"supervised", "prompt"};
  const ResultsReport link = run_experiment(experiment_config_from_json(j));
  EXPECT_EQ(link.metric_names, (std::vector<std::string>{"hit@1", "hit@10", "hit@5", "mrr"}));
  for (const RunRecord& run : link.runs) {
    // 10 candidates per positive: every positive is within the top 10
    EXPECT_DOUBLE_EQ(run.metrics.at("hit@10"), 100.0);
  }
  EXPECT_EQ(link.manifests[0].at("query").size(), 30u);
}

TEST(Transfer, FeatureMismatchIsADomainError) {
  nlohmann::json j = small_config();
  j["transfer"] = {{"source_level", "graph"},
                   {"target_level", "edge"},
                   {"source_dataset", {{"synthetic", {{"level", "graph"}, {"feature_dim", 5}}}}}};
  EXPECT_THROW(transfer_experiment(experiment_config_from_json(j)), DomainTransferError);
}

TEST(Transfer, HardNeedsMatchingClassCounts) {
  nlohmann::json j = small_config();
  j["dataset"]["synthetic"]["num_classes"] = 3;
  j["dataset"]["synthetic"]["nodes_per_class"] = 20;
  j["transfer"] = {{"source_level", "node"}, {"target_level", "edge"}};
  EXPECT_THROW(transfer_experiment(experiment_config_from_json(j)), ConfigError);
}

TEST(Transfer, SchemesShareTheTargetEpisode) {
  nlohmann::json j = small_config();
  j["seeds"] = {2};
  j["transfer"] = {{"source_level", "graph"}, {"target_level", "edge"}};
  const ResultsReport r = transfer_experiment(experiment_config_from_json(j));
  EXPECT_EQ(r.kind, "transfer");
  EXPECT_EQ(r.task, "graph->edge");
  EXPECT_EQ(r.schemes, (std::vector<std::string>{"hard", "fine_tune", "prompt"}));
  ASSERT_EQ(r.runs.size(), 3u);
  ASSERT_EQ(r.manifests.size(), 1u);
  EXPECT_EQ(r.manifests[0].at("target").at("query").size(), 10u);
  EXPECT_TRUE(r.improvement);
}

}  // namespace
}  // namespace gprompt
