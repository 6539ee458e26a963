#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/chat_client.hpp"
#include "fedrec/core_data.hpp"
#include "fedrec/federation.hpp"
#include "fedrec/hybrid_rank.hpp"
#include "fedrec/metrics.hpp"
#include "fedrec/rerank.hpp"
#include "fedrec/text_retriever.hpp"

namespace fedrec {

struct RetrieverTemplates {
  TemplateOptions query{true, 10, "item"};
  TemplateOptions passage{true, std::nullopt, "item"};
};

struct UserScores {
  std::vector<double> id_logits;
  std::vector<double> text_logits;
};

// Retriever outputs for every test user under one trained model, so that
// lambda sweeps and ablations never rerun the encoders.
class ScoreCache {
 public:
  static ScoreCache build(const GlobalModel& model, std::span<const UserSequence> users,
                          const Catalog& catalog, const RetrieverTemplates& templates,
                          std::size_t parallelism = 1);

  std::size_t size() const noexcept { return scores_.size(); }
  const UserScores& at(std::size_t user) const { return scores_.at(user); }

 private:
  std::vector<UserScores> scores_;
};

// Supplies the chat backend for a user. Shared backends ignore the user;
// the test-only oracle needs it to know the answer.
using ClientProvider = std::function<std::shared_ptr<ChatClient>(const UserSequence&)>;

struct RerankSettings {
  RerankConfig cfg;
  ClientProvider provider;
  std::size_t max_in_flight = 4;
  std::optional<std::size_t> budget;  // requests per evaluation run
};

struct UserEvaluation {
  std::string user_id;
  std::size_t stage1_rank = 0;  // in the full sorted hybrid vector
  std::size_t stage2_rank = 0;  // in the final list (re-ranked top-N, then stage-1 tail)
  CandidateSet candidates;
  std::optional<RerankOutcome> outcome;
};

struct PipelineReport {
  double lambda = 0.5;
  bool rerank_enabled = false;
  MetricReport stage1;
  MetricReport stage2;           // every user; fallbacks keep stage-1 order
  MetricReport stage2_filtered;  // users with a stage1-fallback outcome removed
  std::size_t reranked = 0;
  std::size_t fallback = 0;
  std::size_t skipped = 0;
  std::vector<UserEvaluation> users;  // ordered by user_id
};

// Stage 1 (fusion + top-N) and, when `rerank` is given, the gated stage-2
// re-rank for every user. Metrics are reduced in user_id order.
PipelineReport evaluate_cached(const ScoreCache& cache,
                               std::span<const UserSequence> users,
                               const Catalog& catalog, const HybridConfig& hybrid,
                               const RerankSettings* rerank);

PipelineReport evaluate_pipeline(const GlobalModel& model, const FederatedSplit& split,
                                 const Catalog& catalog,
                                 const RetrieverTemplates& templates,
                                 const HybridConfig& hybrid,
                                 const RerankSettings* rerank);

struct SweepRow {
  double lambda = 0.0;
  MetricReport stage1;
};

// Default grid: 0.0, 0.1, ..., 1.0.
std::vector<double> default_lambda_grid();

std::vector<SweepRow> sensitivity_sweep(const ScoreCache& cache,
                                        std::span<const UserSequence> users,
                                        const Catalog& catalog, const HybridConfig& base,
                                        std::span<const double> grid);

struct AblationRow {
  std::string name;
  bool uses_rerank = false;
  PipelineReport report;

  // The number shown in the table: stage 2 when re-ranking is on.
  const MetricReport& final_metrics() const {
    return uses_rerank ? report.stage2 : report.stage1;
  }
};

// Rows: full, w/o ID (lambda = 0), w/o text (lambda = 1), w/o rerank.
std::vector<AblationRow> ablation(const ScoreCache& cache,
                                  std::span<const UserSequence> users,
                                  const Catalog& catalog, const HybridConfig& hybrid,
                                  const RerankSettings& rerank);

std::string format_ablation_table(const std::vector<AblationRow>& rows);
std::string format_sweep_table(const std::vector<SweepRow>& rows);
std::string format_pipeline_table(const PipelineReport& report);

nlohmann::json to_json(const PipelineReport& report, bool include_users = false);
nlohmann::json to_json(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const std::vector<AblationRow>& rows);

}  // namespace fedrec
