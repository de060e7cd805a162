#include "graphprompt/errors.hpp"
#include "graphprompt/experiment.hpp"

#include <fmt/format.h>

#include <fstream>

namespace gprompt {

namespace {

nlohmann::json metric_json(const MetricMap& m) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

MetricMap metric_map(const nlohmann::json& j) {
  MetricMap out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<double>();
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string cell(const MetricMap& m, const std::string& key, const char* spec = "{:.2f}") {
  const auto it = m.find(key);
  return it == m.end() ? "-" : fmt::format(fmt::runtime(spec), it->second);
}

}  // namespace

nlohmann::json to_json(const ResultsReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunRecord& run : r.runs) {
    nlohmann::json j{{"seed", run.seed}, {"scheme", run.scheme}, {"metrics", metric_json(run.metrics)}};
    if (!run.failure.empty()) j["failure"] = run.failure;
    runs.push_back(std::move(j));
  }
  nlohmann::json summaries = nlohmann::json::array();
  for (const SchemeSummary& s : r.summaries) {
    summaries.push_back(
        {{"scheme", s.scheme}, {"mean", metric_json(s.mean)}, {"std", metric_json(s.std)}, {"completed", s.completed}});
  }
  nlohmann::json prints = nlohmann::json::array();
  for (const auto& [seed, print] : r.backbone_fingerprints) prints.push_back({{"seed", seed}, {"fingerprint", print}});
  nlohmann::json out{{"kind", r.kind},
                     {"name", r.name},
                     {"version", kLibraryVersion},
                     {"config", r.config},
                     {"config_hash", r.config_hash},
                     {"task", r.task},
                     {"metrics", r.metric_names},
                     {"schemes", r.schemes},
                     {"runs", runs},
                     {"summary", summaries},
                     {"backbone_fingerprints", prints},
                     {"complete", r.complete}};
  out["improvement"] = r.improvement ? metric_json(*r.improvement) : nlohmann::json(nullptr);
  return out;
}

ResultsReport report_from_json(const nlohmann::json& j) {
  try {
    ResultsReport r;
    r.kind = j.at("kind").get<std::string>();
    r.name = j.at("name").get<std::string>();
    r.config = j.at("config");
    r.config_hash = j.at("config_hash").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.metric_names = j.at("metrics").get<std::vector<std::string>>();
    r.schemes = j.at("schemes").get<std::vector<std::string>>();
    for (const auto& run : j.at("runs")) {
      r.runs.push_back({run.at("seed").get<std::uint64_t>(), run.at("scheme").get<std::string>(),
                        metric_map(run.at("metrics")), run.value("failure", std::string())});
    }
    for (const auto& s : j.at("summary")) {
      r.summaries.push_back({s.at("scheme").get<std::string>(), metric_map(s.at("mean")), metric_map(s.at("std")),
                             s.at("completed").get<int>()});
    }
    for (const auto& p : j.at("backbone_fingerprints")) {
      r.backbone_fingerprints.emplace_back(p.at("seed").get<std::uint64_t>(), p.at("fingerprint").get<std::string>());
    }
    if (!j.at("improvement").is_null()) r.improvement = metric_map(j.at("improvement"));
    r.complete = j.at("complete").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("report: ") + e.what());
  }
}

std::string render_markdown(const ResultsReport& r) {
  std::string md = fmt::format("# {}\n\n", r.name);
  md += fmt::format("{} `{}`, config `{}`, {} seed(s)\n\n", r.kind, r.task, r.config_hash,
                    r.backbone_fingerprints.size());
  if (!r.complete) md += "**Incomplete:** at least one run failed; see the per-seed table.\n\n";

  md += "| scheme |";
  for (const std::string& m : r.metric_names) md += fmt::format(" {} |", m);
  md += "\n|---|";
  for (std::size_t i = 0; i < r.metric_names.size(); ++i) md += "---|";
  md += "\n";
  for (const SchemeSummary& s : r.summaries) {
    md += fmt::format("| {} |", s.scheme);
    for (const std::string& m : r.metric_names) {
      md += s.mean.count(m) ? fmt::format(" {:.2f} ± {:.2f} |", s.mean.at(m), s.std.at(m)) : " - |";
    }
    md += "\n";
  }
  if (r.improvement) {
    md += "| IMP (%) |";
    for (const std::string& m : r.metric_names) md += fmt::format(" {} |", cell(*r.improvement, m));
    md += "\n";
  }

  md += "\n## Runs\n\n| seed | scheme |";
  for (const std::string& m : r.metric_names) md += fmt::format(" {} |", m);
  md += " note |\n|---|---|";
  for (std::size_t i = 0; i < r.metric_names.size(); ++i) md += "---|";
  md += "---|\n";
  for (const RunRecord& run : r.runs) {
    md += fmt::format("| {} | {} |", run.seed, run.scheme);
    for (const std::string& m : r.metric_names) md += fmt::format(" {} |", cell(run.metrics, m));
    md += fmt::format(" {} |\n", run.failure.empty() ? "" : "failed: " + run.failure);
  }
  return md;
}

void write_report(const ResultsReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "report.md", render_markdown(r));
  for (std::size_t i = 0; i < r.manifests.size(); ++i) {
    const std::uint64_t seed = i < r.backbone_fingerprints.size() ? r.backbone_fingerprints[i].first : i;
    write_text(dir / fmt::format("manifest_seed{}.json", seed), r.manifests[i].dump(2) + "\n");
  }
  write_text(dir / "timing.json", nlohmann::json{{"wall_clock_seconds", r.wall_clock_seconds}}.dump(2) + "\n");
}

}  // namespace gprompt
