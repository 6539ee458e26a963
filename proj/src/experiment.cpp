#include "fedrec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "fedrec/checkpoint.hpp"
#include "fedrec/errors.hpp"
#include "fedrec/hash.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

namespace {

using nlohmann::json;

// Typed, strict view of one JSON object in the config.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    const std::string name = where(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + " must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name + " must be a number");
      out = v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(name + " must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name + " must be a string");
      out = v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    if (j_.contains(key) && j_.at(key).is_null()) {
      used_.insert(key);
      out.reset();
      return;
    }
    if (!j_.contains(key)) {
      used_.insert(key);
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  void get_path(const char* key, std::filesystem::path& out,
                const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    std::filesystem::path p(s);
    out = (p.is_relative() && !base.empty()) ? base / p : p;
  }

  std::optional<Section> sub(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  const json* raw(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown config key " + where(key));
    }
  }

 private:
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> used_;
};

void read_optimizer(Section& s, OptimizerKind& out) {
  std::string name = to_string(out);
  s.get("optimizer", name);
  try {
    out = optimizer_from_string(name);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(stage) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(std::string(stage) + ": " + e.what());
  }
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!use_id && !use_text) {
    throw ConfigError("at least one of use_id and use_text must be enabled");
  }
  if (!dataset.synthetic && (dataset.interactions.empty() || dataset.metadata.empty())) {
    throw ConfigError("file datasets need both interactions and metadata paths");
  }
  if (dataset.core_threshold == 0) throw ConfigError("core_threshold must be >= 1");
  if (max_len == 0) throw ConfigError("max_len must be >= 1");
  if (rounds.global_epochs < 1) throw ConfigError("global_epochs must be >= 1");
  if (rounds.client_parallelism == 0) throw ConfigError("client_parallelism must be >= 1");
  const auto& id = rounds.id_cfg;
  const auto& text = rounds.text_cfg;
  if (!(std::isfinite(id.learning_rate) && id.learning_rate >= 0.0) ||
      !(std::isfinite(text.learning_rate) && text.learning_rate >= 0.0)) {
    throw ConfigError("learning rates must be finite and >= 0");
  }
  if (id.local_epochs < 1 || text.local_epochs < 1) {
    throw ConfigError("local_epochs must be >= 1");
  }
  if (id.batch_size == 0 || text.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (id.dim == 0 || text.dim == 0) throw ConfigError("dim must be >= 1");
  if (text.vocab_size == 0) throw ConfigError("vocab_size must be >= 1");
  if (text.n_negatives == 0) throw ConfigError("n_negatives must be >= 1");
  if (!(text.temperature > 0.0) || !std::isfinite(text.temperature)) {
    throw ConfigError("temperature must be finite and > 0");
  }
  if (checkpoints != "all" && checkpoints != "final" && checkpoints != "none") {
    throw ConfigError("checkpoints must be all, final or none");
  }
  hybrid.validate();
  if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
  for (const double l : lambda_grid) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda grid value outside [0, 1]");
  }
  static const std::set<std::string> kClients = {"identity", "oracle", "adversarial",
                                                 "transcript", "http"};
  if (!kClients.count(rerank.client)) {
    throw ConfigError("unknown rerank client '" + rerank.client + "'");
  }
  if (rerank.client == "transcript" && rerank.transcript.empty()) {
    throw ConfigError("the transcript client needs rerank.transcript");
  }
  if (!(rerank.threshold > 0.0 && rerank.threshold <= 1.0)) {
    throw ConfigError("rerank threshold must lie in (0, 1]");
  }
  if (rerank.max_in_flight == 0) throw ConfigError("max_in_flight must be >= 1");
  if (rerank.profile != "shopping" && rerank.profile != "movies") {
    throw ConfigError("rerank profile must be shopping or movies");
  }
  if (rerank.timeout_ms <= 0) throw ConfigError("timeout_ms must be > 0");
  if (rerank.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

ExperimentConfig experiment_config_from_json(const json& j,
                                             const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("max_len", c.max_len);

  if (auto s = root.sub("dataset")) {
    std::string source = c.dataset.synthetic ? "synthetic" : "files";
    s->get("source", source);
    if (source != "synthetic" && source != "files") {
      throw ConfigError("dataset.source must be synthetic or files");
    }
    c.dataset.synthetic = source == "synthetic";
    s->get_path("interactions", c.dataset.interactions, base_dir);
    s->get_path("metadata", c.dataset.metadata, base_dir);
    s->get("core_threshold", c.dataset.core_threshold);
    if (auto g = s->sub("synthetic")) {
      auto& sc = c.dataset.synth;
      g->get("num_clients", sc.num_clients);
      g->get("items_per_client", sc.items_per_client);
      g->get("users_per_client", sc.users_per_client);
      g->get("num_attributes", sc.num_attributes);
      g->get("num_test_users", sc.num_test_users);
      g->get("test_items", sc.test_items);
      g->get("attributes_per_item", sc.attributes_per_item);
      g->get("min_history", sc.min_history);
      g->get("max_history", sc.max_history);
      g->finish();
    }
    s->finish();
  }

  if (auto s = root.sub("split")) {
    s->get("num_clients", c.split.num_clients);
    s->get("users_per_client", c.split.users_per_client);
    std::string mode = to_string(c.split.mode);
    s->get("mode", mode);
    try {
      c.split.mode = split_mode_from_string(mode);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    s->finish();
  }

  if (auto s = root.sub("federation")) {
    s->get("global_epochs", c.rounds.global_epochs);
    s->get("client_parallelism", c.rounds.client_parallelism);
    s->get("checkpoints", c.checkpoints);
    s->finish();
  }

  if (auto s = root.sub("id")) {
    auto& id = c.rounds.id_cfg;
    s->get("learning_rate", id.learning_rate);
    s->get("local_epochs", id.local_epochs);
    s->get("batch_size", id.batch_size);
    s->get("dim", id.dim);
    read_optimizer(*s, id.optimizer);
    s->finish();
  }

  if (auto s = root.sub("text")) {
    auto& t = c.rounds.text_cfg;
    s->get("learning_rate", t.learning_rate);
    s->get("local_epochs", t.local_epochs);
    s->get("batch_size", t.batch_size);
    s->get("n_negatives", t.n_negatives);
    s->get("vocab_size", t.vocab_size);
    s->get("dim", t.dim);
    s->get("temperature", t.temperature);
    read_optimizer(*s, t.optimizer);
    bool attrs = t.query_template.include_attributes;
    s->get("include_attributes", attrs);
    t.query_template.include_attributes = attrs;
    t.passage_template.include_attributes = attrs;
    s->get("query_last_n", t.query_template.last_n);
    std::string noun = t.query_template.noun;
    s->get("noun", noun);
    t.query_template.noun = noun;
    t.passage_template.noun = noun;
    s->finish();
  }

  if (auto s = root.sub("hybrid")) {
    s->get("lambda", c.hybrid.lambda);
    s->get("n_candidates", c.hybrid.n_candidates);
    s->get("mask_history", c.hybrid.mask_history);
    s->finish();
  }

  if (auto s = root.sub("rerank")) {
    auto& r = c.rerank;
    s->get("client", r.client);
    s->get("threshold", r.threshold);
    s->get("budget", r.budget);
    s->get("max_in_flight", r.max_in_flight);
    s->get_path("transcript", r.transcript, base_dir);
    s->get("profile", r.profile);
    s->get("history_last_n", r.history_last_n);
    s->get("timeout_ms", r.timeout_ms);
    s->get("max_retries", r.max_retries);
    if (auto h = s->sub("http")) {
      h->get("base_url", r.http.base_url);
      h->get("model", r.http.model);
      h->get("temperature", r.http.temperature);
      h->get("api_key_env", r.http.api_key_env);
      h->finish();
    }
    s->finish();
  }

  if (auto s = root.sub("sweep")) {
    s->get("enabled", c.run_sweep);
    if (const auto* grid = s->raw("grid")) {
      if (!grid->is_array()) throw ConfigError("sweep.grid must be an array");
      c.lambda_grid.clear();
      for (const auto& v : *grid) {
        if (!v.is_number()) throw ConfigError("sweep.grid entries must be numbers");
        c.lambda_grid.push_back(v.get<double>());
      }
    }
    s->finish();
  }

  if (auto s = root.sub("ablation")) {
    s->get("enabled", c.run_ablation);
    s->get("use_id", c.use_id);
    s->get("use_text", c.use_text);
    s->get("use_rerank", c.use_rerank);
    s->finish();
  }

  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  // A run manifest carries the config it was produced from.
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) {
    j = j.at("config");
  }
  return experiment_config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  const auto& sc = c.dataset.synth;
  const auto& id = c.rounds.id_cfg;
  const auto& t = c.rounds.text_cfg;
  const auto& r = c.rerank;
  json dataset = {{"source", c.dataset.synthetic ? "synthetic" : "files"},
                  {"core_threshold", c.dataset.core_threshold},
                  {"synthetic",
                   {{"num_clients", sc.num_clients},
                    {"items_per_client", sc.items_per_client},
                    {"users_per_client", sc.users_per_client},
                    {"num_attributes", sc.num_attributes},
                    {"num_test_users", sc.num_test_users},
                    {"test_items", sc.test_items},
                    {"attributes_per_item", sc.attributes_per_item},
                    {"min_history", sc.min_history},
                    {"max_history", sc.max_history}}}};
  if (!c.dataset.interactions.empty()) dataset["interactions"] = c.dataset.interactions.string();
  if (!c.dataset.metadata.empty()) dataset["metadata"] = c.dataset.metadata.string();
  json rerank = {{"client", r.client},
                 {"threshold", r.threshold},
                 {"budget", r.budget ? json(*r.budget) : json(nullptr)},
                 {"max_in_flight", r.max_in_flight},
                 {"profile", r.profile},
                 {"history_last_n", r.history_last_n ? json(*r.history_last_n) : json(nullptr)},
                 {"timeout_ms", r.timeout_ms},
                 {"max_retries", r.max_retries},
                 {"http",
                  {{"base_url", r.http.base_url},
                   {"model", r.http.model},
                   {"temperature", r.http.temperature},
                   {"api_key_env", r.http.api_key_env}}}};
  if (!r.transcript.empty()) rerank["transcript"] = r.transcript.string();
  return {
      {"seed", c.seed},
      {"max_len", c.max_len},
      {"dataset", std::move(dataset)},
      {"split",
       {{"num_clients", c.split.num_clients},
        {"users_per_client", c.split.users_per_client},
        {"mode", to_string(c.split.mode)}}},
      {"federation",
       {{"global_epochs", c.rounds.global_epochs},
        {"client_parallelism", c.rounds.client_parallelism},
        {"checkpoints", c.checkpoints}}},
      {"id",
       {{"learning_rate", id.learning_rate},
        {"local_epochs", id.local_epochs},
        {"batch_size", id.batch_size},
        {"dim", id.dim},
        {"optimizer", to_string(id.optimizer)}}},
      {"text",
       {{"learning_rate", t.learning_rate},
        {"local_epochs", t.local_epochs},
        {"batch_size", t.batch_size},
        {"n_negatives", t.n_negatives},
        {"vocab_size", t.vocab_size},
        {"dim", t.dim},
        {"temperature", t.temperature},
        {"optimizer", to_string(t.optimizer)},
        {"include_attributes", t.query_template.include_attributes},
        {"query_last_n",
         t.query_template.last_n ? json(*t.query_template.last_n) : json(nullptr)},
        {"noun", t.query_template.noun}}},
      {"hybrid",
       {{"lambda", c.hybrid.lambda},
        {"n_candidates", c.hybrid.n_candidates},
        {"mask_history", c.hybrid.mask_history}}},
      {"rerank", std::move(rerank)},
      {"sweep", {{"enabled", c.run_sweep}, {"grid", c.lambda_grid}}},
      {"ablation",
       {{"enabled", c.run_ablation},
        {"use_id", c.use_id},
        {"use_text", c.use_text},
        {"use_rerank", c.use_rerank}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  return to_hex(fnv1a64(to_json(config).dump()));
}

StageSeeds stage_seeds(std::uint64_t seed) {
  return {derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3),
          derive_seed(seed, 4), derive_seed(seed, 5)};
}

PreparedData prepare_data(const ExperimentConfig& config) {
  const auto seeds = stage_seeds(config.seed);
  PreparedData out;
  if (config.dataset.synthetic) {
    auto sc = config.dataset.synth;
    sc.seed = seeds.data;
    auto synth = staged("synthesize", [&] { return synth_heterogeneous(sc); });
    out.catalog = std::move(synth.catalog);
    out.split = std::move(synth.split);
    return out;
  }
  auto dataset = staged("ingest", [&] {
    return load_interactions(config.dataset.interactions, config.dataset.metadata);
  });
  out.interactions_raw = dataset.interactions.size();
  auto core = staged("5-core", [&] {
    return five_core_filter(dataset.interactions, config.dataset.core_threshold);
  });
  out.interactions_core = core.size();
  out.catalog = dataset.catalog.restricted_to(core);
  auto built = staged("sequences", [&] {
    return build_sequences(core, out.catalog, config.max_len);
  });
  out.skipped_users = built.skipped_users;
  auto split_cfg = config.split;
  split_cfg.seed = seeds.split;
  out.split = staged("split", [&] {
    return partition_federated(std::move(built.sequences), split_cfg);
  });
  return out;
}

RoundConfig effective_rounds(const ExperimentConfig& config) {
  const auto seeds = stage_seeds(config.seed);
  auto rounds = config.rounds;
  rounds.id_cfg.seed = seeds.id;
  rounds.id_cfg.max_len = config.max_len;
  rounds.text_cfg.seed = seeds.text;
  rounds.train_id = config.use_id;
  rounds.train_text = config.use_text;
  return rounds;
}

HybridConfig effective_hybrid(const ExperimentConfig& config) {
  auto hybrid = config.hybrid;
  if (!config.use_id) hybrid.lambda = 0.0;
  if (!config.use_text) hybrid.lambda = 1.0;
  return hybrid;
}

RetrieverTemplates retriever_templates(const ExperimentConfig& config) {
  return {config.rounds.text_cfg.query_template, config.rounds.text_cfg.passage_template};
}

ClientProvider make_client_provider(const RerankClientConfig& config,
                                    const Catalog& catalog, std::uint64_t seed) {
  if (config.client == "identity") {
    auto client = std::make_shared<IdentityClient>();
    return [client](const UserSequence&) { return client; };
  }
  if (config.client == "oracle") {
    return [&catalog](const UserSequence& user) -> std::shared_ptr<ChatClient> {
      return std::make_shared<OracleClient>(catalog.at(user.target).title);
    };
  }
  if (config.client == "adversarial") {
    // Per-user streams keep the output independent of scheduling.
    return [seed](const UserSequence& user) -> std::shared_ptr<ChatClient> {
      return std::make_shared<AdversarialClient>(derive_seed(seed, fnv1a64(user.user_id)));
    };
  }
  if (config.client == "transcript") {
    auto client = std::make_shared<TranscriptClient>(config.transcript, config.http.model,
                                                     config.http.temperature);
    return [client](const UserSequence&) { return client; };
  }
  if (config.client == "http") {
    auto client = std::make_shared<HttpChatClient>(config.http);
    return [client](const UserSequence&) { return client; };
  }
  throw ConfigError("unknown rerank client '" + config.client + "'");
}

RerankSettings make_rerank_settings(const ExperimentConfig& config, const Catalog& catalog) {
  RerankSettings settings;
  settings.cfg.threshold = config.rerank.threshold;
  settings.cfg.profile =
      config.rerank.profile == "movies" ? PromptProfile::movies() : PromptProfile::shopping();
  settings.cfg.profile.history_last_n = config.rerank.history_last_n;
  settings.cfg.limits.timeout = std::chrono::milliseconds(config.rerank.timeout_ms);
  settings.cfg.limits.max_retries = config.rerank.max_retries;
  settings.max_in_flight = config.rerank.max_in_flight;
  settings.budget = config.rerank.budget;
  settings.provider =
      make_client_provider(config.rerank, catalog, stage_seeds(config.seed).rerank);
  return settings;
}

SweepSummary summarize_sweep(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw PreconditionError("empty sweep");
  SweepSummary s;
  s.best_recall_at_10 = rows.front().stage1.recall_at_10;
  s.best_lambda = rows.front().lambda;
  for (const auto& row : rows) {
    if (row.stage1.recall_at_10 > s.best_recall_at_10) {
      s.best_recall_at_10 = row.stage1.recall_at_10;
      s.best_lambda = row.lambda;
    }
  }
  for (const auto& row : rows) {
    if (row.stage1.recall_at_10 == s.best_recall_at_10) s.argmax.push_back(row.lambda);
  }
  // Text endpoint if it ties for the best, else interior if any interior
  // lambda does, else the ID endpoint.
  const auto has = [&](auto pred) { return std::any_of(s.argmax.begin(), s.argmax.end(), pred); };
  if (has([](double l) { return l == 0.0; })) {
    s.location = "text-endpoint";
  } else if (has([](double l) { return l > 0.0 && l < 1.0; })) {
    s.location = "interior";
  } else {
    s.location = "id-endpoint";
  }
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir) {
  config.validate();
  ExperimentResult result;
  result.data = prepare_data(config);
  const auto& catalog = result.data.catalog;
  const auto& split = result.data.split;

  auto rounds = effective_rounds(config);
  const bool write = !out_dir.empty();
  const auto ckpt_dir = out_dir / "checkpoints";
  if (write) {
    std::filesystem::create_directories(out_dir);
    write_split_manifest(split, out_dir / "split.json");
    if (config.checkpoints == "all") {
      rounds.on_round_end = [&](const GlobalModel& m) { save_global_model(ckpt_dir, m); };
    }
  }
  result.training =
      staged("train", [&] { return run_federated_training(split, catalog, rounds); });
  if (write && config.checkpoints == "final") {
    save_global_model(ckpt_dir, result.training.model);
  }

  const auto hybrid = effective_hybrid(config);
  const auto templates = retriever_templates(config);
  const auto cache = staged("evaluate", [&] {
    return ScoreCache::build(result.training.model, split.test_users, catalog, templates,
                             std::max<std::size_t>(1, config.rounds.client_parallelism));
  });
  std::optional<RerankSettings> rerank;
  if (config.use_rerank || config.run_ablation) {
    rerank = staged("rerank", [&] { return make_rerank_settings(config, catalog); });
  }
  result.report = staged("evaluate", [&] {
    return evaluate_cached(cache, split.test_users, catalog, hybrid,
                           config.use_rerank ? &*rerank : nullptr);
  });
  const double endpoints[] = {1.0, 0.0};
  const auto singles = staged("evaluate", [&] {
    return sensitivity_sweep(cache, split.test_users, catalog, hybrid, endpoints);
  });
  if (config.run_sweep) {
    result.sweep = staged("sweep", [&] {
      return sensitivity_sweep(cache, split.test_users, catalog, hybrid, config.lambda_grid);
    });
    result.sweep_summary = summarize_sweep(result.sweep);
  }
  if (config.run_ablation) {
    result.ablation = staged("ablate", [&] {
      return ablation(cache, split.test_users, catalog, config.hybrid, *rerank);
    });
  }

  std::vector<std::size_t> client_sizes;
  for (const auto& c : split.clients) client_sizes.push_back(c.size());
  auto& rj = result.report_json;
  rj["version"] = kVersion;
  rj["config_hash"] = config_hash(config);
  rj["seed"] = config.seed;
  rj["data"] = {{"catalog_items", catalog.size()},
                {"client_users", client_sizes},
                {"test_users", split.test_users.size()},
                {"interactions_raw", result.data.interactions_raw},
                {"interactions_core", result.data.interactions_core},
                {"skipped_users", result.data.skipped_users}};
  rj["model_checksum"] = to_hex(result.training.model.checksum());
  rj["evaluation"] = to_json(result.report, true);
  rj["retrievers"] = {{"id_only", to_json(singles[0].stage1)},
                      {"text_only", to_json(singles[1].stage1)}};
  if (config.run_sweep) {
    rj["sweep"] = to_json(result.sweep);
    const auto& s = *result.sweep_summary;
    rj["sweep_summary"] = {{"best_lambda", s.best_lambda},
                           {"best_recall@10", s.best_recall_at_10},
                           {"argmax", s.argmax},
                           {"location", s.location}};
  }
  if (config.run_ablation) rj["ablation"] = to_json(result.ablation);

  std::string text = "pipeline (lambda=" + std::to_string(hybrid.lambda) + ")\n" +
                     format_pipeline_table(result.report);
  text += "\nsingle retrievers\n" + format_sweep_table(singles);
  if (config.run_sweep) {
    text += "\nlambda sweep (stage 1)\n" + format_sweep_table(result.sweep);
    text += "best lambda " + std::to_string(result.sweep_summary->best_lambda) + " (" +
            result.sweep_summary->location + ")\n";
  }
  if (config.run_ablation) text += "\nablation\n" + format_ablation_table(result.ablation);
  result.report_text = text;

  if (write) {
    write_text(out_dir / "report.json", rj.dump(2) + "\n");
    write_text(out_dir / "report.txt", text);
    std::string log;
    for (const auto& m : result.training.log) log += to_json(m).dump() + "\n";
    write_text(out_dir / "metrics.jsonl", log);
    const auto seeds = stage_seeds(config.seed);
    json manifest = {{"format", "fedrec-manifest-v1"},
                     {"version", kVersion},
                     {"compiler", __VERSION__},
                     {"config_hash", config_hash(config)},
                     {"config", to_json(config)},
                     {"seeds",
                      {{"experiment", config.seed},
                       {"data", seeds.data},
                       {"split", seeds.split},
                       {"id", seeds.id},
                       {"text", seeds.text},
                       {"rerank", seeds.rerank}}},
                     {"model_checksum", to_hex(result.training.model.checksum())},
                     {"files",
                      {"report.json", "report.txt", "metrics.jsonl", "split.json"}}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

}  // namespace fedrec
