#pragma once

// Declarative experiment configuration and the runners that compare training schemes
// (supervised, pre-train + fine-tune, prompt, meta-initialised prompt) and transfer
// strategies on few-shot episodes.

#include "graphprompt/backbone.hpp"
#include "graphprompt/errorlab.hpp"
#include "graphprompt/graph.hpp"
#include "graphprompt/meta.hpp"
#include "graphprompt/metrics.hpp"
#include "graphprompt/pretrain.hpp"
#include "graphprompt/prompt.hpp"
#include "graphprompt/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gprompt {

inline constexpr const char* kLibraryVersion = "graphprompt 0.1.0";

enum class Scheme { supervised, pretrain_finetune, prompt, meta_prompt };
enum class TransferScheme { hard, fine_tune, prompt };

std::string to_string(Scheme s);
std::string to_string(TransferScheme s);
Scheme parse_scheme(const std::string& s);
TransferScheme parse_transfer_scheme(const std::string& s);

// Either a dataset directory or a synthetic generator run with its own seed. The data
// are the same for every experiment seed.
struct DatasetRef {
  std::string path;
  std::optional<GeneratorSpec> synthetic;
  std::uint64_t seed = 0;
};

struct TaskSettings {
  TaskKind level = TaskKind::node;
  int shots = 100;  // per class; regression: support size; link: training positives
  int query = 50;   // per class; regression: query size; link: test positives
  int hops = kDefaultHops;
  int max_nodes = kDefaultMaxNodes;
  double message_ratio = 0.8;
  double train_ratio = 0.1;
  int train_negatives = 1;
  int test_negatives = 100;
};

struct PromptSettings {
  int num_tokens = 10;
  StructureMode structure_mode = StructureMode::learnable;
  InsertMode insert_mode = InsertMode::weighted_feature_add;
  double delta = 0.5;
};

struct MetaSettings {
  MetaConfig config;
  int tasks = 40;  // auxiliary episodes drawn from the training pool
  int shots = 5;
  int query = 5;
};

struct TransferSettings {
  TaskKind source_level = TaskKind::graph;
  TaskKind target_level = TaskKind::edge;
  std::optional<DatasetRef> source_dataset;  // defaults to the experiment dataset
  std::vector<TransferScheme> schemes{TransferScheme::hard, TransferScheme::fine_tune, TransferScheme::prompt};
};

// The error-bound lab: a frozen encoder, prompts learned to imitate graph
// transformations. The graphs are the pre-training corpus of the dataset.
struct ErrorBoundSettings {
  std::vector<int> token_counts{3, 5, 10};
  std::vector<Augmentation> transformations{Augmentation::drop_nodes, Augmentation::drop_edges,
                                            Augmentation::mask_features};
  double ratio = 0.2;
  std::uint64_t transformation_seed = 0;
  int max_graphs = 50;
  ImitationConfig imitation{{1000, 0.003, OptimizerKind::adam}, PromptSharing::per_graph,
                            InsertMode::weighted_feature_add, StructureMode::learnable, 0.1, 0, 1};
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetRef dataset;
  TaskSettings task;
  std::vector<std::uint64_t> seeds{0};
  std::vector<Scheme> schemes{Scheme::prompt};
  BackboneConfig backbone;  // input_dim comes from the data
  std::string backbone_checkpoint;  // reuse a pre-trained encoder instead of pre-training
  PretrainConfig pretrain;
  int pretrain_max_graphs = 0;  // 0: every graph of the pre-training corpus
  PromptSettings prompt;
  TuneConfig tune{200, 0.01, OptimizerKind::adam};
  TuneConfig finetune{200, 0.01, OptimizerKind::adam};
  MetaSettings meta;
  std::optional<TransferSettings> transfer;
  ErrorBoundSettings error_bound;
  std::vector<std::string> metrics;  // empty: the task's full metric set
  std::string output_dir = "out";
};

// Parses and validates a configuration document. Unknown keys, wrong types, invalid
// enum strings and invalid scheme/task combinations raise ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& document);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Canonical echo with every default filled in.
nlohmann::json to_json(const ExperimentConfig& config);
// Throws ConfigError.
void validate(const ExperimentConfig& config);

// FNV-1a of the library version and the canonical configuration.
std::string config_hash(const ExperimentConfig& config);

Dataset resolve_dataset(const DatasetRef& ref);

struct RunRecord {
  std::uint64_t seed = 0;
  std::string scheme;
  MetricMap metrics;
  std::string failure;  // empty on success
};

struct SchemeSummary {
  std::string scheme;
  MetricMap mean;
  MetricMap std;  // sample standard deviation over completed seeds
  int completed = 0;
};

struct ResultsReport {
  std::string kind;  // "experiment" or "transfer"
  std::string name;
  nlohmann::json config;
  std::string config_hash;
  std::string task;
  std::vector<std::string> metric_names;
  std::vector<std::string> schemes;
  std::vector<RunRecord> runs;  // seed-major, schemes in configured order
  std::vector<SchemeSummary> summaries;
  std::optional<MetricMap> improvement;  // prompt over the other rows, per metric
  std::vector<nlohmann::json> manifests;  // one per seed
  std::vector<std::pair<std::uint64_t, std::string>> backbone_fingerprints;
  bool complete = true;
  double wall_clock_seconds = 0.0;  // kept out of report.json
};

// Classification and ranking metrics in percent, regression errors as is.
MetricMap report_metrics(const MetricMap& raw, TaskKind kind);

// Mean improvement of `prompt_scheme` over every other row, per metric; positive is
// better (error metrics are sign-flipped).
MetricMap improvement_over_rest(const std::vector<SchemeSummary>& summaries, const std::string& prompt_scheme);

using ProgressCallback = std::function<void(const std::string& event, const nlohmann::json& detail)>;

struct RunOptions {
  int threads = 1;  // seeds run concurrently; results are assembled in seed order
  ProgressCallback on_event;
};

ResultsReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
// Requires config.transfer. Throws DomainTransferError when source and target feature
// dimensions differ and ConfigError when hard transfer meets a different class count.
ResultsReport transfer_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Single-seed pieces of the experiment, used by the command-line tool.
// Pre-trains the encoder on the seed's pre-training corpus.
PretrainResult pretrain_for_seed(const ExperimentConfig& config, std::uint64_t seed,
                                 const EpochCallback& on_epoch = {});

struct PromptArtifacts {
  BackboneModel backbone;          // frozen
  std::optional<MetaResult> meta;  // the meta-initialisation, when requested
  TuneResult tuned;
  nlohmann::json manifest;
  MetricMap query_metrics;
};
// Prompt tuning (optionally from a meta-initialisation) on the seed's episode, then
// evaluation on its query set.
PromptArtifacts prompt_for_seed(const ExperimentConfig& config, std::uint64_t seed, bool meta_init,
                                const MetaStepCallback& on_meta_step = {});

// Error table for the configured lab. The encoder is pre-trained with `seed` unless a
// checkpoint is configured.
ErrorTable run_error_bound(const ExperimentConfig& config, std::uint64_t seed, int threads = 1);

nlohmann::json to_json(const ResultsReport& report);
ResultsReport report_from_json(const nlohmann::json& j);
std::string render_markdown(const ResultsReport& report);
// Writes report.json, report.md and one manifest per seed; timing goes to timing.json.
void write_report(const ResultsReport& report, const std::filesystem::path& dir);

}  // namespace gprompt
