// fedrec: command-line front end for the federated retrieval + re-rank pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/checkpoint.hpp"
#include "fedrec/core_data.hpp"
#include "fedrec/errors.hpp"
#include "fedrec/evaluation.hpp"
#include "fedrec/experiment.hpp"
#include "fedrec/hash.hpp"
#include "fedrec/prompt.hpp"
#include "fedrec/rerank.hpp"
#include "fedrec/rerank_policy.hpp"
#include "fedrec/text_retriever.hpp"

namespace {

using namespace fedrec;
using nlohmann::json;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const GlobalOptions& g) {
  ExperimentConfig cfg =
      g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_ids(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string id;
  while (std::getline(ss, id, ',')) {
    if (!id.empty()) out.push_back(id);
  }
  return out;
}

Catalog read_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return Catalog(parse_item_metadata(in));
}

std::vector<ItemIndex> to_indices(const std::vector<std::string>& ids, const Catalog& catalog) {
  std::vector<ItemIndex> out;
  for (const auto& id : ids) {
    const auto idx = catalog.find(id);
    if (!idx) throw ValidationError("item '" + id + "' is not in the metadata");
    out.push_back(*idx);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

int cmd_ingest(const GlobalOptions& g, const std::string& interactions,
               const std::string& metadata, std::size_t threshold, std::size_t max_len) {
  const auto dataset = load_interactions(interactions, metadata);
  const auto core = five_core_filter(dataset.interactions, threshold);
  const auto catalog = dataset.catalog.restricted_to(core);
  const auto built = build_sequences(core, catalog, max_len);
  json stats = {{"interactions_raw", dataset.interactions.size()},
                {"interactions_core", core.size()},
                {"items", catalog.size()},
                {"users", built.sequences.size()},
                {"skipped_users", built.skipped_users}};
  if (!g.out.empty()) {
    std::string tsv = "user_id\titem_id\ttimestamp\n";
    for (const auto& r : core) {
      tsv += r.user_id + "\t" + r.item_id + "\t" + std::to_string(r.timestamp) + "\n";
    }
    write_file(std::filesystem::path(g.out) / "interactions.core.tsv", tsv);
    std::string seqs;
    for (const auto& s : built.sequences) {
      json hist = json::array();
      for (const auto i : s.history) hist.push_back(catalog.at(i).item_id);
      seqs += json{{"user_id", s.user_id}, {"history", hist},
                   {"target", catalog.at(s.target).item_id}}.dump() + "\n";
    }
    write_file(std::filesystem::path(g.out) / "sequences.jsonl", seqs);
  }
  std::cout << stats.dump(2) << "\n";
  return 0;
}

int cmd_split(const GlobalOptions& g) {
  const auto cfg = load_config(g);
  const auto data = prepare_data(cfg);
  if (!g.out.empty()) {
    std::filesystem::create_directories(g.out);
    write_split_manifest(data.split, std::filesystem::path(g.out) / "split.json");
  }
  std::vector<std::size_t> sizes;
  for (const auto& c : data.split.clients) sizes.push_back(c.size());
  std::cout << json{{"items", data.catalog.size()},
                    {"client_users", sizes},
                    {"test_users", data.split.test_users.size()}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& g) {
  const auto cfg = load_config(g);
  const auto data = prepare_data(cfg);
  auto rounds = effective_rounds(cfg);
  const std::filesystem::path out = g.out;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_split_manifest(data.split, out / "split.json");
    if (cfg.checkpoints == "all") {
      rounds.on_round_end = [&](const GlobalModel& m) {
        save_global_model(out / "checkpoints", m);
      };
    }
  }
  std::string log;
  rounds.on_round_end = [&, inner = rounds.on_round_end](const GlobalModel& m) {
    if (inner) inner(m);
    std::cerr << "round " << m.round << " done\n";
  };
  const auto result = run_federated_training(data.split, data.catalog, rounds);
  for (const auto& m : result.log) log += to_json(m).dump() + "\n";
  if (!out.empty()) {
    if (cfg.checkpoints != "all") save_global_model(out / "checkpoints", result.model);
    write_file(out / "metrics.jsonl", log);
  } else {
    std::cout << log;
  }
  std::cout << "model checksum " << to_hex(result.model.checksum()) << "\n";
  return 0;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& model_dir) {
  auto cfg = load_config(g);
  if (model_dir.empty()) {
    cfg.run_sweep = false;
    cfg.run_ablation = false;
    const auto result = run_experiment(cfg, g.out);
    std::cout << result.report_text;
    return 0;
  }
  const auto data = prepare_data(cfg);
  const auto model = load_global_model(model_dir);
  const auto cache = ScoreCache::build(model, data.split.test_users, data.catalog,
                                       retriever_templates(cfg));
  std::optional<RerankSettings> rerank;
  if (cfg.use_rerank) rerank = make_rerank_settings(cfg, data.catalog);
  const auto report = evaluate_cached(cache, data.split.test_users, data.catalog,
                                      effective_hybrid(cfg), rerank ? &*rerank : nullptr);
  if (!g.out.empty()) {
    write_file(std::filesystem::path(g.out) / "evaluation.json",
               to_json(report, true).dump(2) + "\n");
  }
  std::cout << format_pipeline_table(report);
  return 0;
}

int cmd_sweep(const GlobalOptions& g, const std::vector<double>& grid) {
  auto cfg = load_config(g);
  cfg.run_sweep = true;
  cfg.run_ablation = false;
  if (!grid.empty()) cfg.lambda_grid = grid;
  cfg.validate();
  const auto result = run_experiment(cfg, g.out);
  std::cout << format_sweep_table(result.sweep);
  std::cout << "best lambda " << result.sweep_summary->best_lambda << " ("
            << result.sweep_summary->location << ")\n";
  return 0;
}

int cmd_ablate(const GlobalOptions& g) {
  auto cfg = load_config(g);
  cfg.run_ablation = true;
  cfg.run_sweep = false;
  const auto result = run_experiment(cfg, g.out);
  std::cout << format_ablation_table(result.ablation);
  return 0;
}

struct RerankArgs {
  std::string candidates;
  std::string metadata;
  std::string client = "identity";
  std::optional<double> threshold;
  std::optional<std::size_t> budget;
  std::string transcript;
  bool gate = false;
};

int cmd_rerank(const GlobalOptions& g, const RerankArgs& a) {
  auto cfg = g.config.empty() ? ExperimentConfig{} : load_config(g);
  cfg.rerank.client = a.client;
  if (a.threshold) cfg.rerank.threshold = *a.threshold;
  if (a.budget) cfg.rerank.budget = *a.budget;
  if (!a.transcript.empty()) cfg.rerank.transcript = a.transcript;
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  const auto catalog = read_catalog(a.metadata);
  auto settings = make_rerank_settings(cfg, catalog);
  std::optional<RequestBudget> budget;
  if (settings.budget) {
    budget.emplace(*settings.budget);
    settings.cfg.limits.budget = &*budget;
  }

  std::ifstream in(a.candidates);
  if (!in) throw ValidationError("cannot open " + a.candidates);
  std::string line, out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, e.what());
    }
    const auto set = candidate_set_from_json(j, catalog);
    UserSequence user;
    user.user_id = set.user_id;
    if (j.contains("history")) {
      user.history = to_indices(j.at("history").get<std::vector<std::string>>(), catalog);
    }
    const bool has_gt = j.contains("ground_truth");
    if (has_gt) user.target = to_indices({j.at("ground_truth").get<std::string>()}, catalog)[0];
    if ((a.gate || a.client == "oracle") && !has_gt) {
      throw ValidationError("line " + std::to_string(lineno) + ": ground_truth required");
    }
    auto client = settings.provider(user);
    const auto outcome =
        a.gate ? eval_protocol::apply_rerank_policy(user, set, catalog, *client, settings.cfg)
               : rerank_candidates(user.history, set, catalog, *client, settings.cfg);
    out += to_json(outcome, catalog).dump() + "\n";
  }
  if (g.out.empty()) {
    std::cout << out;
  } else {
    write_file(std::filesystem::path(g.out) / "reranked.jsonl", out);
  }
  return 0;
}

struct RenderArgs {
  std::string metadata;
  std::string what = "prompt";
  std::string history;
  std::string candidates;
  std::string item;
  std::string profile = "shopping";
  std::string noun = "item";
  std::optional<std::size_t> last_n;
  bool no_attributes = false;
};

int cmd_render(const RenderArgs& a) {
  const auto catalog = read_catalog(a.metadata);
  const auto history = to_indices(split_ids(a.history), catalog);
  const TemplateOptions opts{!a.no_attributes, a.last_n, a.noun};
  if (a.what == "query") {
    std::cout << render_query(history, catalog, opts).text << "\n";
  } else if (a.what == "passage") {
    const auto item = to_indices({a.item}, catalog);
    if (item.empty()) throw ValidationError("--item is required for passages");
    std::cout << render_passage(item[0], catalog, opts).text << "\n";
  } else if (a.what == "prompt") {
    CandidateSet set;
    set.items = to_indices(split_ids(a.candidates), catalog);
    auto profile = a.profile == "movies" ? PromptProfile::movies() : PromptProfile::shopping();
    profile.include_attributes = !a.no_attributes;
    profile.history_last_n = a.last_n;
    const auto msg = build_prompt(history, set, catalog, profile);
    std::cout << "[system]\n" << msg.system << "\n[user]\n" << msg.user << "\n";
  } else {
    throw ValidationError("unknown render target '" + a.what + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated hybrid retrieval with LLM re-ranking"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "experiment config (JSON) or run manifest");
  app.add_option("--seed", g.seed, "experiment seed (overrides the config)");
  app.add_option("--out", g.out, "output directory");
  app.fallthrough();

  std::string interactions, metadata;
  std::size_t threshold = kCoreThreshold, max_len = kDefaultMaxLen;
  auto* ingest = app.add_subcommand("ingest", "load, 5-core filter and sequence a dataset");
  ingest->add_option("--interactions", interactions, "TSV: user_id, item_id, timestamp")
      ->required();
  ingest->add_option("--metadata", metadata, "JSON lines item metadata")->required();
  ingest->add_option("--core-threshold", threshold);
  ingest->add_option("--max-len", max_len);

  auto* split = app.add_subcommand("split", "partition users into clients and test users");
  auto* train = app.add_subcommand("train", "run federated training");
  std::string model_dir;
  auto* evaluate = app.add_subcommand("evaluate", "stage-1 and stage-2 evaluation");
  evaluate->add_option("--model", model_dir, "checkpoint directory to evaluate");
  std::vector<double> grid;
  auto* sweep = app.add_subcommand("sweep", "lambda sensitivity sweep");
  sweep->add_option("--grid", grid, "lambda values")->delimiter(',');
  auto* ablate = app.add_subcommand("ablate", "four-variant ablation table");

  RerankArgs ra;
  auto* rerank = app.add_subcommand("rerank", "re-rank candidate sets with a chat client");
  rerank->add_option("--candidates", ra.candidates, "JSON lines candidate sets")->required();
  rerank->add_option("--metadata", ra.metadata, "JSON lines item metadata")->required();
  rerank->add_option("--client", ra.client)
      ->check(CLI::IsMember({"identity", "oracle", "adversarial", "transcript", "http"}));
  rerank->add_option("--threshold", ra.threshold);
  rerank->add_option("--budget", ra.budget);
  rerank->add_option("--transcript", ra.transcript);
  rerank->add_flag("--gate", ra.gate, "apply the ground-truth gate and fallback");

  RenderArgs rd;
  auto* render = app.add_subcommand("render", "print retriever text or the re-rank prompt");
  render->add_option("--metadata", rd.metadata)->required();
  render->add_option("--what", rd.what)->check(CLI::IsMember({"query", "passage", "prompt"}));
  render->add_option("--history", rd.history, "comma-separated item ids");
  render->add_option("--candidates", rd.candidates, "comma-separated item ids");
  render->add_option("--item", rd.item);
  render->add_option("--profile", rd.profile)->check(CLI::IsMember({"shopping", "movies"}));
  render->add_option("--noun", rd.noun);
  render->add_option("--last-n", rd.last_n);
  render->add_flag("--no-attributes", rd.no_attributes);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(g, interactions, metadata, threshold, max_len);
    if (*split) return cmd_split(g);
    if (*train) return cmd_train(g);
    if (*evaluate) return cmd_evaluate(g, model_dir);
    if (*sweep) return cmd_sweep(g, grid);
    if (*ablate) return cmd_ablate(g);
    if (*rerank) return cmd_rerank(g, ra);
    if (*render) return cmd_render(rd);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
