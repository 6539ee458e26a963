#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/chat_client.hpp"
#include "fedrec/core_data.hpp"
#include "fedrec/evaluation.hpp"
#include "fedrec/federation.hpp"
#include "fedrec/hybrid_rank.hpp"
#include "fedrec/prompt.hpp"
#include "fedrec/synthetic.hpp"

namespace fedrec {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetSource {
  bool synthetic = true;
  SynthConfig synth;  // seed is derived from the experiment seed
  std::filesystem::path interactions;
  std::filesystem::path metadata;
  std::size_t core_threshold = kCoreThreshold;
};

struct RerankClientConfig {
  // identity | oracle | adversarial | transcript | http
  std::string client = "identity";
  double threshold = 0.8;
  std::optional<std::size_t> budget;
  std::size_t max_in_flight = 4;
  std::filesystem::path transcript;
  std::string profile = "shopping";  // shopping | movies
  std::optional<std::size_t> history_last_n;
  HttpClientConfig http;
  std::int64_t timeout_ms = 30000;
  int max_retries = 3;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  DatasetSource dataset;
  SplitConfig split;  // file datasets only; the synthetic generator splits itself
  std::size_t max_len = kDefaultMaxLen;
  RoundConfig rounds;  // seeds are derived from `seed`
  std::string checkpoints = "all";  // all | final | none
  HybridConfig hybrid;
  RerankClientConfig rerank;
  std::vector<double> lambda_grid = default_lambda_grid();
  bool run_sweep = true;
  bool run_ablation = true;
  bool use_id = true;
  bool use_text = true;
  bool use_rerank = true;

  // Throws ConfigError.
  void validate() const;
};

// Unknown keys are rejected. Relative paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

// Seeds every stage draws from, all derived from config.seed.
struct StageSeeds {
  std::uint64_t data = 0;
  std::uint64_t split = 0;
  std::uint64_t id = 0;
  std::uint64_t text = 0;
  std::uint64_t rerank = 0;
};
StageSeeds stage_seeds(std::uint64_t seed);

struct PreparedData {
  Catalog catalog;
  FederatedSplit split;
  std::size_t interactions_raw = 0;
  std::size_t interactions_core = 0;
  std::size_t skipped_users = 0;
};

// Ingest, 5-core, sequences and split (or the synthetic generator).
PreparedData prepare_data(const ExperimentConfig& config);

// RoundConfig with derived seeds and the use_id/use_text masks applied.
RoundConfig effective_rounds(const ExperimentConfig& config);
// Hybrid config with lambda pinned to 0 or 1 when a retriever is masked.
HybridConfig effective_hybrid(const ExperimentConfig& config);
RetrieverTemplates retriever_templates(const ExperimentConfig& config);

// One client per user for "oracle", one shared client otherwise.
ClientProvider make_client_provider(const RerankClientConfig& config,
                                    const Catalog& catalog, std::uint64_t seed);
RerankSettings make_rerank_settings(const ExperimentConfig& config,
                                    const Catalog& catalog);

// Where the sweep's best Recall@10 sits.
struct SweepSummary {
  double best_lambda = 0.0;
  double best_recall_at_10 = 0.0;
  std::vector<double> argmax;  // every lambda attaining the best value
  std::string location;        // "text-endpoint" | "interior" | "id-endpoint"
};
SweepSummary summarize_sweep(const std::vector<SweepRow>& rows);

struct ExperimentResult {
  PreparedData data;
  TrainingResult training;
  PipelineReport report;
  std::vector<SweepRow> sweep;
  std::optional<SweepSummary> sweep_summary;
  std::vector<AblationRow> ablation;
  nlohmann::json report_json;  // deterministic: no timings
  std::string report_text;
};

// End to end. When `out_dir` is non-empty, writes report.json, report.txt,
// manifest.json, split.json, metrics.jsonl and checkpoints/.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path& out_dir = {});

}  // namespace fedrec
