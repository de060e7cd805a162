#include "graphprompt/dataset_io.hpp"
#include "graphprompt/errors.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace gprompt {
namespace {

namespace fs = std::filesystem;

class DatasetIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gprompt_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }

  void write_small() {
    write("meta.json", R"({"name": "tiny", "feature_dim": 2, "num_classes": 2, "task_kind": "node"})");
    write("nodes.tsv", "a\t0\t1.0,0.0\nb\t1\t0.5,0.5\nc\t-\t0,1\nd\t0\t2,2\n");
    write("edges.tsv", "a\tb\nb\tc\t1\nc\td\n");
  }

  fs::path dir_;
};

TEST_F(DatasetIo, LoadsSmallGraph) {
  write_small();
  const Dataset d = load_dataset(dir_);
  ASSERT_EQ(d.graphs.size(), 1u);
  const Graph& g = d.graphs[0];
  EXPECT_EQ(g.node_count(), 4);
  EXPECT_EQ(g.edge_count(), 3u);
  EXPECT_EQ(g.node_labels(), (std::vector<int>{0, 1, -1, 0}));
  EXPECT_EQ(g.edge_labels().at(Edge{1, 2}), 1);
  EXPECT_DOUBLE_EQ(g.features()(1, 1), 0.5);
  EXPECT_EQ(d.task_kind, TaskKind::node);
}

TEST_F(DatasetIo, DanglingEndpointNamesLine) {
  write_small();
  write("edges.tsv", "a\tb\nb\t99\n");
  try {
    load_dataset(dir_);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("edges.tsv:2"), std::string::npos) << e.what();
  }
}

TEST_F(DatasetIo, MissingFileNamed) {
  write_small();
  fs::remove(dir_ / "edges.tsv");
  try {
    load_dataset(dir_);
    FAIL() << "expected an I/O error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("edges.tsv"), std::string::npos);
  }
}

TEST_F(DatasetIo, FeatureCountMismatchIsSchemaError) {
  write_small();
  write("nodes.tsv", "a\t0\t1.0\n");
  EXPECT_THROW(load_dataset(dir_), SchemaError);
}

TEST_F(DatasetIo, RoundTripIsStructurallyIdentical) {
  GeneratorSpec spec;
  spec.graphs_per_class = 3;
  Rng rng(5);
  const Dataset original = synthesize_dataset(spec, rng);
  save_dataset(original, dir_);
  const Dataset first = load_dataset(dir_);
  const fs::path again = dir_ / "again";
  save_dataset(first, again);
  const Dataset second = load_dataset(again);
  ASSERT_EQ(first.graphs.size(), original.graphs.size());
  for (std::size_t i = 0; i < original.graphs.size(); ++i) {
    EXPECT_EQ(first.graphs[i].features(), original.graphs[i].features());
    EXPECT_EQ(first.graphs[i].edges(), original.graphs[i].edges());
    EXPECT_EQ(first.graphs[i].graph_class(), original.graphs[i].graph_class());
    EXPECT_EQ(second.graphs[i], first.graphs[i]);
  }
}

TEST_F(DatasetIo, ReverseDuplicatesMerge) {
  write_small();
  write("edges.tsv", "a\tb\nb\ta\nc\td\n");
  const Dataset d = load_dataset(dir_);
  EXPECT_EQ(d.graphs[0].edge_count(), 2u);
}

}  // namespace
}  // namespace gprompt
