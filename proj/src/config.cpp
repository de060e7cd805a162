#include "graphprompt/experiment.hpp"

#include "graphprompt/checkpoint.hpp"
#include "graphprompt/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>

namespace gprompt {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::supervised: return "supervised";
    case Scheme::pretrain_finetune: return "pretrain_finetune";
    case Scheme::prompt: return "prompt";
    case Scheme::meta_prompt: return "meta_prompt";
  }
  return "?";
}

std::string to_string(TransferScheme s) {
  switch (s) {
    case TransferScheme::hard: return "hard";
    case TransferScheme::fine_tune: return "fine_tune";
    case TransferScheme::prompt: return "prompt";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  for (Scheme x : {Scheme::supervised, Scheme::pretrain_finetune, Scheme::prompt, Scheme::meta_prompt}) {
    if (to_string(x) == s) return x;
  }
  throw ConfigError("unknown training scheme '" + s + "'");
}

TransferScheme parse_transfer_scheme(const std::string& s) {
  for (TransferScheme x : {TransferScheme::hard, TransferScheme::fine_tune, TransferScheme::prompt}) {
    if (to_string(x) == s) return x;
  }
  throw ConfigError("unknown transfer scheme '" + s + "'");
}

namespace {

using nlohmann::json;

// Reads one object section, remembering which keys were consumed so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    used_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw type_error(key, "a boolean");
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw type_error(key, "a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw type_error(key, "an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw type_error(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw type_error(key, "a string");
    }
    return v.get<T>();
  }

  template <typename Parse>
  auto get_enum(const std::string& key, decltype(std::declval<Parse>()(std::string())) fallback, Parse parse) {
    if (!j_.contains(key)) return fallback;
    const std::string s = get<std::string>(key, "");
    try {
      return parse(s);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(where(key) + e.what());
    }
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) {
    if (!j_.contains(key)) return fallback;
    used_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "a list of strings");
    std::vector<std::string> out;
    for (const json& x : v) {
      if (!x.is_string()) throw type_error(key, "a list of strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(where(it.key()) + "unknown key");
    }
  }

  std::string where(const std::string& key = "") const {
    std::string p = path_;
    if (!key.empty()) p = p.empty() ? key : p + "." + key;
    return p.empty() ? "" : p + ": ";
  }

 private:
  ConfigError type_error(const std::string& key, const std::string& what) const {
    return ConfigError(where(key) + "expected " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

GeneratorSpec read_generator(Section s) {
  GeneratorSpec g;
  g.level = s.get<std::string>("level", g.level);
  g.num_classes = s.get("num_classes", g.num_classes);
  g.graphs_per_class = s.get("graphs_per_class", g.graphs_per_class);
  g.min_nodes = s.get("min_nodes", g.min_nodes);
  g.max_nodes = s.get("max_nodes", g.max_nodes);
  g.nodes_per_class = s.get("nodes_per_class", g.nodes_per_class);
  g.blocks = s.get("blocks", g.blocks);
  g.p_intra = s.get("p_intra", g.p_intra);
  g.p_inter = s.get("p_inter", g.p_inter);
  g.density_step = s.get("density_step", g.density_step);
  g.feature_dim = s.get("feature_dim", g.feature_dim);
  g.feature_separation = s.get("feature_separation", g.feature_separation);
  g.feature_noise = s.get("feature_noise", g.feature_noise);
  g.name = s.get<std::string>("name", g.name);
  s.finish();
  return g;
}

json generator_json(const GeneratorSpec& g) {
  return json{{"level", g.level},
              {"num_classes", g.num_classes},
              {"graphs_per_class", g.graphs_per_class},
              {"min_nodes", g.min_nodes},
              {"max_nodes", g.max_nodes},
              {"nodes_per_class", g.nodes_per_class},
              {"blocks", g.blocks},
              {"p_intra", g.p_intra},
              {"p_inter", g.p_inter},
              {"density_step", g.density_step},
              {"feature_dim", g.feature_dim},
              {"feature_separation", g.feature_separation},
              {"feature_noise", g.feature_noise},
              {"name", g.name}};
}

DatasetRef read_dataset(Section s) {
  DatasetRef d;
  d.path = s.get<std::string>("path", "");
  if (s.has("synthetic")) d.synthetic = read_generator(s.child("synthetic"));
  d.seed = s.get<std::uint64_t>("seed", 0);
  if (d.path.empty() == !d.synthetic) throw ConfigError(s.where() + "give exactly one of 'path' and 'synthetic'");
  s.finish();
  return d;
}

json dataset_json(const DatasetRef& d) {
  json j{{"seed", d.seed}};
  if (d.synthetic) {
    j["synthetic"] = generator_json(*d.synthetic);
  } else {
    j["path"] = d.path;
  }
  return j;
}

TuneConfig read_tune(Section s, TuneConfig t) {
  t.steps = s.get("steps", t.steps);
  t.learning_rate = s.get("learning_rate", t.learning_rate);
  t.optimizer = s.get_enum("optimizer", t.optimizer, parse_optimizer);
  s.finish();
  return t;
}

json tune_json(const TuneConfig& t) {
  return json{{"steps", t.steps}, {"learning_rate", t.learning_rate}, {"optimizer", to_string(t.optimizer)}};
}

AugmentationSpec read_view(Section s, AugmentationSpec v) {
  v.kind = s.get_enum("kind", v.kind, parse_augmentation);
  v.ratio = s.get("ratio", v.ratio);
  s.finish();
  return v;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& document) {
  ExperimentConfig c;
  Section root(document, "");
  c.name = root.get<std::string>("name", c.name);
  if (!root.has("dataset")) throw ConfigError("dataset: missing section");
  c.dataset = read_dataset(root.child("dataset"));

  if (root.has("task")) {
    Section s = root.child("task");
    c.task.level = s.get_enum("level", c.task.level, parse_task_kind);
    c.task.shots = s.get("shots", c.task.shots);
    c.task.query = s.get("query", c.task.query);
    c.task.hops = s.get("hops", c.task.hops);
    c.task.max_nodes = s.get("max_nodes", c.task.max_nodes);
    c.task.message_ratio = s.get("message_ratio", c.task.message_ratio);
    c.task.train_ratio = s.get("train_ratio", c.task.train_ratio);
    c.task.train_negatives = s.get("train_negatives", c.task.train_negatives);
    c.task.test_negatives = s.get("test_negatives", c.task.test_negatives);
    s.finish();
  }

  if (root.has("seeds")) {
    const json& seeds = root.raw("seeds");
    if (!seeds.is_array()) throw ConfigError("seeds: expected a list of non-negative integers");
    c.seeds.clear();
    for (const json& s : seeds) {
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
        throw ConfigError("seeds: expected a list of non-negative integers");
      }
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }

  if (root.has("schemes")) {
    c.schemes.clear();
    for (const std::string& s : root.strings("schemes", {})) c.schemes.push_back(parse_scheme(s));
  }

  if (root.has("backbone")) {
    Section s = root.child("backbone");
    c.backbone.hidden_dim = s.get("hidden_dim", c.backbone.hidden_dim);
    c.backbone.depth = s.get("depth", c.backbone.depth);
    c.backbone.activation = s.get_enum("activation", c.backbone.activation, parse_activation);
    c.backbone.readout = s.get_enum("readout", c.backbone.readout, parse_readout);
    c.backbone_checkpoint = s.get<std::string>("checkpoint", "");
    s.finish();
  }

  if (root.has("pretrain")) {
    Section s = root.child("pretrain");
    PretrainConfig& p = c.pretrain;
    p.objective = s.get_enum("objective", p.objective, parse_objective);
    p.epochs = s.get("epochs", p.epochs);
    p.batch_size = s.get("batch_size", p.batch_size);
    p.temperature = s.get("temperature", p.temperature);
    p.learning_rate = s.get("learning_rate", p.learning_rate);
    if (s.has("view_a")) p.view_a = read_view(s.child("view_a"), p.view_a);
    if (s.has("view_b")) p.view_b = read_view(s.child("view_b"), p.view_b);
    p.perturbation_scale = s.get("perturbation_scale", p.perturbation_scale);
    c.pretrain_max_graphs = s.get("max_graphs", c.pretrain_max_graphs);
    s.finish();
  }

  if (root.has("prompt")) {
    Section s = root.child("prompt");
    c.prompt.num_tokens = s.get("num_tokens", c.prompt.num_tokens);
    c.prompt.structure_mode = s.get_enum("structure_mode", c.prompt.structure_mode, parse_structure_mode);
    c.prompt.insert_mode = s.get_enum("insert_mode", c.prompt.insert_mode, parse_insert_mode);
    c.prompt.delta = s.get("delta", c.prompt.delta);
    s.finish();
  }

  if (root.has("tune")) c.tune = read_tune(root.child("tune"), c.tune);
  if (root.has("finetune")) c.finetune = read_tune(root.child("finetune"), c.finetune);

  if (root.has("meta")) {
    Section s = root.child("meta");
    MetaConfig& m = c.meta.config;
    m.inner_steps = s.get("inner_steps", m.inner_steps);
    m.inner_lr = s.get("inner_lr", m.inner_lr);
    m.outer_lr = s.get("outer_lr", m.outer_lr);
    m.meta_batch = s.get("meta_batch", m.meta_batch);
    m.outer_steps = s.get("outer_steps", m.outer_steps);
    m.first_order = s.get("first_order", m.first_order);
    c.meta.tasks = s.get("tasks", c.meta.tasks);
    c.meta.shots = s.get("shots", c.meta.shots);
    c.meta.query = s.get("query", c.meta.query);
    s.finish();
  }

  if (root.has("transfer")) {
    Section s = root.child("transfer");
    TransferSettings t;
    t.source_level = s.get_enum("source_level", t.source_level, parse_task_kind);
    t.target_level = s.get_enum("target_level", t.target_level, parse_task_kind);
    if (s.has("source_dataset")) t.source_dataset = read_dataset(s.child("source_dataset"));
    if (s.has("schemes")) {
      t.schemes.clear();
      for (const std::string& x : s.strings("schemes", {})) t.schemes.push_back(parse_transfer_scheme(x));
    }
    s.finish();
    c.transfer = t;
  }

  if (root.has("error_bound")) {
    Section s = root.child("error_bound");
    ErrorBoundSettings& e = c.error_bound;
    if (s.has("token_counts")) {
      const json& counts = s.raw("token_counts");
      if (!counts.is_array()) throw ConfigError("error_bound.token_counts: expected a list of integers");
      e.token_counts.clear();
      for (const json& k : counts) {
        if (!k.is_number_integer()) throw ConfigError("error_bound.token_counts: expected a list of integers");
        e.token_counts.push_back(k.get<int>());
      }
    }
    if (s.has("transformations")) {
      e.transformations.clear();
      for (const std::string& x : s.strings("transformations", {})) {
        try {
          e.transformations.push_back(parse_augmentation(x));
        } catch (const Error& err) {
          throw ConfigError(std::string("error_bound.transformations: ") + err.what());
        }
      }
    }
    e.ratio = s.get("ratio", e.ratio);
    e.transformation_seed = s.get("transformation_seed", e.transformation_seed);
    e.max_graphs = s.get("max_graphs", e.max_graphs);
    ImitationConfig& im = e.imitation;
    if (s.has("tune")) im.tune = read_tune(s.child("tune"), im.tune);
    im.sharing = s.get_enum("sharing", im.sharing, parse_prompt_sharing);
    im.insert_mode = s.get_enum("insert_mode", im.insert_mode, parse_insert_mode);
    im.structure_mode = s.get_enum("structure_mode", im.structure_mode, parse_structure_mode);
    im.delta = s.get("delta", im.delta);
    s.finish();
  }

  c.metrics = root.strings("metrics", {});
  c.output_dir = root.get<std::string>("output_dir", c.output_dir);
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["dataset"] = dataset_json(c.dataset);
  j["task"] = {{"level", to_string(c.task.level)},
               {"shots", c.task.shots},
               {"query", c.task.query},
               {"hops", c.task.hops},
               {"max_nodes", c.task.max_nodes},
               {"message_ratio", c.task.message_ratio},
               {"train_ratio", c.task.train_ratio},
               {"train_negatives", c.task.train_negatives},
               {"test_negatives", c.task.test_negatives}};
  j["seeds"] = c.seeds;
  j["schemes"] = json::array();
  for (Scheme s : c.schemes) j["schemes"].push_back(to_string(s));
  j["backbone"] = {{"hidden_dim", c.backbone.hidden_dim},
                   {"depth", c.backbone.depth},
                   {"activation", to_string(c.backbone.activation)},
                   {"readout", to_string(c.backbone.readout)},
                   {"checkpoint", c.backbone_checkpoint}};
  const PretrainConfig& p = c.pretrain;
  j["pretrain"] = {{"objective", to_string(p.objective)},
                   {"epochs", p.epochs},
                   {"batch_size", p.batch_size},
                   {"temperature", p.temperature},
                   {"learning_rate", p.learning_rate},
                   {"view_a", {{"kind", to_string(p.view_a.kind)}, {"ratio", p.view_a.ratio}}},
                   {"view_b", {{"kind", to_string(p.view_b.kind)}, {"ratio", p.view_b.ratio}}},
                   {"perturbation_scale", p.perturbation_scale},
                   {"max_graphs", c.pretrain_max_graphs}};
  j["prompt"] = {{"num_tokens", c.prompt.num_tokens},
                 {"structure_mode", to_string(c.prompt.structure_mode)},
                 {"insert_mode", to_string(c.prompt.insert_mode)},
                 {"delta", c.prompt.delta}};
  j["tune"] = tune_json(c.tune);
  j["finetune"] = tune_json(c.finetune);
  const MetaConfig& m = c.meta.config;
  j["meta"] = {{"inner_steps", m.inner_steps}, {"inner_lr", m.inner_lr},     {"outer_lr", m.outer_lr},
               {"meta_batch", m.meta_batch},   {"outer_steps", m.outer_steps}, {"first_order", m.first_order},
               {"tasks", c.meta.tasks},        {"shots", c.meta.shots},       {"query", c.meta.query}};
  if (c.transfer) {
    json t{{"source_level", to_string(c.transfer->source_level)},
           {"target_level", to_string(c.transfer->target_level)},
           {"schemes", json::array()}};
    for (TransferScheme s : c.transfer->schemes) t["schemes"].push_back(to_string(s));
    if (c.transfer->source_dataset) t["source_dataset"] = dataset_json(*c.transfer->source_dataset);
    j["transfer"] = t;
  }
  const ErrorBoundSettings& e = c.error_bound;
  j["error_bound"] = {{"token_counts", e.token_counts},
                      {"transformations", json::array()},
                      {"ratio", e.ratio},
                      {"transformation_seed", e.transformation_seed},
                      {"max_graphs", e.max_graphs},
                      {"tune", tune_json(e.imitation.tune)},
                      {"sharing", to_string(e.imitation.sharing)},
                      {"insert_mode", to_string(e.imitation.insert_mode)},
                      {"structure_mode", to_string(e.imitation.structure_mode)},
                      {"delta", e.imitation.delta}};
  for (Augmentation a : e.transformations) j["error_bound"]["transformations"].push_back(to_string(a));
  j["metrics"] = c.metrics;
  j["output_dir"] = c.output_dir;
  return j;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.seeds.empty()) fail("seeds: at least one seed is required");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    fail("seeds: every seed must be distinct");
  }
  if (c.schemes.empty()) fail("schemes: at least one training scheme is required");
  for (std::size_t i = 0; i < c.schemes.size(); ++i)
    for (std::size_t k = i + 1; k < c.schemes.size(); ++k)
      if (c.schemes[i] == c.schemes[k]) fail("schemes: '" + to_string(c.schemes[i]) + "' is listed twice");

  const TaskKind level = c.task.level;
  if (c.task.shots < 1) fail("task.shots must be >= 1");
  if (c.task.query < 1) fail("task.query must be >= 1");
  if (c.task.hops < 1) fail("task.hops must be >= 1");
  if (c.task.max_nodes < (level == TaskKind::edge || level == TaskKind::link ? 2 : 1)) {
    fail("task.max_nodes is too small for the task level");
  }
  if (level == TaskKind::link) {
    if (c.task.train_negatives < 1 || c.task.test_negatives < 1) fail("task: negatives per positive must be >= 1");
  }
  for (Scheme s : c.schemes) {
    if (s == Scheme::meta_prompt && (level == TaskKind::link || level == TaskKind::regression)) {
      fail("schemes: meta_prompt is only defined for node, edge and graph classification");
    }
  }
  if (c.dataset.synthetic && c.dataset.synthetic->level != "graph" && c.dataset.synthetic->level != "node") {
    fail("dataset.synthetic.level must be 'graph' or 'node'");
  }

  const auto allowed = metric_names(level);
  for (const std::string& m : c.metrics) {
    if (std::find(allowed.begin(), allowed.end(), m) == allowed.end()) {
      fail("metrics: '" + m + "' is not reported for " + to_string(level) + " tasks");
    }
  }

  if (c.backbone.hidden_dim < 1 || c.backbone.depth < 1) fail("backbone: hidden_dim and depth must be >= 1");
  if (c.prompt.num_tokens < 1) fail("prompt.num_tokens must be >= 1");
  if (!(c.prompt.delta > 0.0 && c.prompt.delta < 1.0)) fail("prompt.delta must lie in (0, 1)");
  for (const auto& [name, t] : {std::pair{"tune", c.tune}, std::pair{"finetune", c.finetune}}) {
    if (t.steps < 0) fail(std::string(name) + ".steps must be >= 0");
    if (!(t.learning_rate > 0.0)) fail(std::string(name) + ".learning_rate must be > 0");
  }
  if (c.pretrain_max_graphs < 0) fail("pretrain.max_graphs must be >= 0");
  try {
    validate(c.pretrain);
  } catch (const ValidationError& e) {
    fail(std::string("pretrain: ") + e.what());
  }
  if (std::find(c.schemes.begin(), c.schemes.end(), Scheme::meta_prompt) != c.schemes.end()) {
    try {
      validate(c.meta.config);
    } catch (const ValidationError& e) {
      fail(std::string("meta: ") + e.what());
    }
    if (c.meta.tasks < 1 || c.meta.shots < 1 || c.meta.query < 1) fail("meta: tasks, shots and query must be >= 1");
    if (c.meta.shots + c.meta.query > c.task.shots) {
      fail("meta: shots + query must fit in the task's per-class support (meta episodes are drawn from it)");
    }
  }
  if (c.transfer) {
    for (TaskKind k : {c.transfer->source_level, c.transfer->target_level}) {
      if (k != TaskKind::node && k != TaskKind::edge && k != TaskKind::graph) {
        fail("transfer: levels must be node, edge or graph");
      }
    }
    if (c.transfer->schemes.empty()) fail("transfer.schemes: at least one scheme is required");
  }
  const ErrorBoundSettings& e = c.error_bound;
  if (e.token_counts.empty() || e.transformations.empty()) {
    fail("error_bound: token_counts and transformations must be non-empty");
  }
  for (int k : e.token_counts)
    if (k < 1) fail("error_bound.token_counts: every count must be >= 1");
  if (!(e.ratio >= 0.0 && e.ratio <= 1.0)) fail("error_bound.ratio must lie in [0, 1]");
  if (e.max_graphs < 0) fail("error_bound.max_graphs must be >= 0");
  if (e.imitation.tune.steps < 0 || !(e.imitation.tune.learning_rate > 0.0)) {
    fail("error_bound.tune: steps must be >= 0 and learning_rate > 0");
  }
  if (!(e.imitation.delta >= 0.0 && e.imitation.delta < 1.0)) fail("error_bound.delta must lie in [0, 1)");
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = std::string(kLibraryVersion) + "\n" + to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

}  // namespace gprompt
