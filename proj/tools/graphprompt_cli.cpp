#include "graphprompt/checkpoint.hpp"
#include "graphprompt/errors.hpp"
#include "graphprompt/experiment.hpp"
#include "graphprompt/log.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace gprompt;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  std::string input;  // report: an existing report.json
  bool quiet = false;
};

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void write(const nlohmann::json& j) { out_ << j.dump() << "\n" << std::flush; }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = load_experiment_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (o.threads < 1) throw ConfigError("--threads must be >= 1");
  return c;
}

fs::path out_dir(const Options& o, const ExperimentConfig& c) {
  const fs::path dir = o.out.empty() ? fs::path(c.output_dir) : fs::path(o.out);
  fs::create_directories(dir);
  return dir;
}

std::uint64_t first_seed(const ExperimentConfig& c) { return c.seeds.front(); }

void say(const Options& o, const std::string& line) {
  if (!o.quiet) std::cout << line << "\n";
}

int cmd_pretrain(const Options& o) {
  const ExperimentConfig c = load(o);
  if (!c.backbone_checkpoint.empty()) throw ConfigError("backbone.checkpoint is an input; pretrain starts from scratch");
  const fs::path dir = out_dir(o, c);
  JsonLines log(dir / "pretrain_log.jsonl");
  const PretrainResult r = pretrain_for_seed(c, first_seed(c), [&](int epoch, double loss) {
    log.write({{"epoch", epoch}, {"mean_loss", loss}});
  });
  save_backbone(r.model, dir / "backbone.ckpt");
  say(o, fmt::format("backbone {} written to {}", hex64(r.model.fingerprint()), (dir / "backbone.ckpt").string()));
  return 0;
}

int cmd_tune(const Options& o, bool meta) {
  const ExperimentConfig c = load(o);
  const fs::path dir = out_dir(o, c);
  std::optional<JsonLines> log;
  if (meta) log.emplace(dir / "meta_log.jsonl");
  const PromptArtifacts r = prompt_for_seed(c, first_seed(c), meta, [&](int step, double loss) {
    log->write({{"outer_step", step}, {"mean_query_loss", loss}});
  });
  if (r.meta) save_prompt(r.meta->prompt, dir / "meta_prompt.ckpt", &r.meta->head);
  save_prompt(r.tuned.prompt, dir / "prompt.ckpt", &r.tuned.head);
  JsonLines tune_log(dir / "tune_log.jsonl");
  for (std::size_t i = 0; i < r.tuned.loss_trace.size(); ++i) tune_log.write({{"step", i}, {"loss", r.tuned.loss_trace[i]}});
  write_json(dir / fmt::format("manifest_seed{}.json", first_seed(c)), r.manifest);
  nlohmann::json metrics{{"seed", first_seed(c)},
                         {"backbone_fingerprint", hex64(r.backbone.fingerprint())},
                         {"query_metrics", r.query_metrics}};
  write_json(dir / "metrics.json", metrics);
  say(o, metrics.dump());
  return 0;
}

int finish_report(const Options& o, const ResultsReport& r, const fs::path& dir) {
  write_report(r, dir);
  say(o, render_markdown(r));
  return r.complete ? 0 : kExitNumeric;
}

int cmd_eval(const Options& o, bool transfer) {
  const ExperimentConfig c = load(o);
  if (transfer && !c.transfer) throw ConfigError("transfer: missing section");
  const fs::path dir = out_dir(o, c);
  JsonLines log(dir / (transfer ? "transfer_log.jsonl" : "eval_log.jsonl"));
  RunOptions opts;
  opts.threads = o.threads;
  opts.on_event = [&](const std::string& event, const nlohmann::json& detail) {
    nlohmann::json j = detail;
    j["event"] = event;
    log.write(j);
  };
  return finish_report(o, transfer ? transfer_experiment(c, opts) : run_experiment(c, opts), dir);
}

int cmd_error_bound(const Options& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir = out_dir(o, c);
  const ErrorTable t = run_error_bound(c, first_seed(c), o.threads);
  nlohmann::json j = to_json(t);
  j["config_hash"] = config_hash(c);
  j["seed"] = first_seed(c);
  write_json(dir / "error_table.json", j);
  const std::string md = render_markdown(t);
  write_text(dir / "error_table.md", md);
  say(o, md);
  return 0;
}

int cmd_report(const Options& o) {
  if (o.input.empty()) throw ConfigError("report: --in is required");
  std::ifstream in(o.input);
  if (!in) throw IoError("cannot read " + o.input);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(o.input + ": " + e.what());
  }
  const ResultsReport r = report_from_json(j);
  const fs::path dir = o.out.empty() ? fs::path(o.input).parent_path() : fs::path(o.out);
  if (!dir.empty()) fs::create_directories(dir);
  write_json(dir / "report.json", to_json(r));
  write_text(dir / "report.md", render_markdown(r));
  say(o, render_markdown(r));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph prompt tuning: pre-training, prompt tuning, meta-training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto shared = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", o.config, "experiment configuration (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run this seed only");
    sub->add_option("--out", o.out, "output directory (default: output_dir of the configuration)");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", o.quiet, "no console output");
  };

  auto* pretrain = app.add_subcommand("pretrain", "contrastive pre-training of the encoder");
  auto* tune = app.add_subcommand("tune", "tune a prompt on one seed's few-shot episode");
  auto* meta = app.add_subcommand("meta-train", "meta-initialise a prompt, then tune it");
  auto* eval = app.add_subcommand("eval", "compare training schemes over every seed");
  auto* transfer = app.add_subcommand("transfer", "transfer across task levels or datasets");
  auto* bound = app.add_subcommand("error-bound", "error table for prompts imitating graph transformations");
  auto* report = app.add_subcommand("report", "re-render report.md from report.json");
  for (CLI::App* sub : {pretrain, tune, meta, eval, transfer, bound}) shared(sub);
  shared(report, false);
  report->add_option("--in", o.input, "report.json to render")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }
  if (o.quiet) set_log_level(LogLevel::quiet);

  try {
    if (pretrain->parsed()) return cmd_pretrain(o);
    if (tune->parsed()) return cmd_tune(o, false);
    if (meta->parsed()) return cmd_tune(o, true);
    if (eval->parsed()) return cmd_eval(o, false);
    if (transfer->parsed()) return cmd_eval(o, true);
    if (bound->parsed()) return cmd_error_bound(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
