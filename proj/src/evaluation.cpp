#include "fedrec/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

#include "fedrec/errors.hpp"
#include "fedrec/rerank_policy.hpp"

namespace fedrec {

namespace {

constexpr std::size_t kUnranked = std::numeric_limits<std::size_t>::max();

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (auto i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::size_t> user_order(std::span<const UserSequence> users) {
  std::vector<std::size_t> order(users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return users[a].user_id < users[b].user_id;
  });
  return order;
}

std::size_t stage1_rank(std::span<const double> scores, const UserSequence& user,
                        bool mask_history) {
  if (!mask_history) return full_rank(scores, user.target);
  if (std::find(user.history.begin(), user.history.end(), user.target) !=
      user.history.end()) {
    return kUnranked;
  }
  return full_rank(scores, user.target, user.history);
}

void check_cache(const ScoreCache& cache, std::span<const UserSequence> users) {
  if (cache.size() != users.size()) {
    throw ShapeError("score cache holds " + std::to_string(cache.size()) +
                     " users, evaluation got " + std::to_string(users.size()));
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string metric_cells(const MetricReport& r) {
  if (r.user_count == 0) return "     n/a      n/a      n/a      n/a";
  return "  " + fmt(r.recall_at_5) + "   " + fmt(r.ndcg_at_5) + "   " +
         fmt(r.recall_at_10) + "   " + fmt(r.ndcg_at_10);
}

constexpr const char* kMetricHeader = "     R@5      N@5     R@10     N@10";

}  // namespace

ScoreCache ScoreCache::build(const GlobalModel& model, std::span<const UserSequence> users,
                             const Catalog& catalog, const RetrieverTemplates& templates,
                             std::size_t parallelism) {
  if (catalog.empty()) throw PreconditionError("ScoreCache: empty catalog");
  ScoreCache cache;
  cache.scores_.resize(users.size());
  const PassageIndex passages(model.text_params, catalog, templates.passage);
  parallel_for(users.size(), parallelism, [&](std::size_t u) {
    const auto& user = users[u];
    auto& out = cache.scores_[u];
    out.id_logits = id_forward(model.id_params, user.history,
                               std::max(user.history.size(), kDefaultMaxLen));
    out.text_logits = passages.score(
        model.text_params, render_query(user.history, catalog, templates.query).text);
  });
  return cache;
}

PipelineReport evaluate_cached(const ScoreCache& cache,
                               std::span<const UserSequence> users,
                               const Catalog& catalog, const HybridConfig& hybrid,
                               const RerankSettings* rerank) {
  hybrid.validate();
  check_cache(cache, users);
  PipelineReport report;
  report.lambda = hybrid.lambda;
  report.rerank_enabled = rerank != nullptr;
  const auto order = user_order(users);

  report.users.resize(users.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto u = order[pos];
    const auto& scores = cache.at(u);
    const auto fused = hybrid_scores(scores.id_logits, scores.text_logits, hybrid.lambda);
    auto& eval = report.users[pos];
    eval.user_id = users[u].user_id;
    eval.stage1_rank = stage1_rank(fused, users[u], hybrid.mask_history);
    eval.stage2_rank = eval.stage1_rank;
    eval.candidates = retrieve_top_n(fused, hybrid, users[u].history, users[u].user_id);
  }

  if (rerank != nullptr) {
    if (!rerank->provider) throw ConfigError("rerank settings have no client provider");
    auto cfg = rerank->cfg;
    std::optional<RequestBudget> budget;
    if (rerank->budget) {
      budget.emplace(*rerank->budget);
      cfg.limits.budget = &*budget;
    }
    parallel_for(order.size(), rerank->max_in_flight, [&](std::size_t pos) {
      const auto& user = users[order[pos]];
      auto& eval = report.users[pos];
      auto client = rerank->provider(user);
      eval.outcome = eval_protocol::apply_rerank_policy(user, eval.candidates, catalog,
                                                        *client, cfg);
      if (eval.outcome->source == RerankSource::kReranked) {
        const auto& items = eval.outcome->ranked_items;
        eval.stage2_rank =
            static_cast<std::size_t>(std::find(items.begin(), items.end(), user.target) -
                                     items.begin()) + 1;
      }
    });
  }

  MetricAccumulator s1, s2, s2f;
  for (const auto& eval : report.users) {
    s1.add_rank(eval.stage1_rank);
    s2.add_rank(eval.stage2_rank);
    const auto source = eval.outcome ? eval.outcome->source : RerankSource::kSkipped;
    switch (source) {
      case RerankSource::kReranked:
        ++report.reranked;
        break;
      case RerankSource::kStage1Fallback:
        ++report.fallback;
        break;
      case RerankSource::kSkipped:
        if (eval.outcome) ++report.skipped;
        break;
    }
    if (source != RerankSource::kStage1Fallback) s2f.add_rank(eval.stage2_rank);
  }
  report.stage1 = s1.report(ReportConvention::kFallbackInclusive);
  report.stage2 = s2.report(ReportConvention::kFallbackInclusive);
  report.stage2_filtered = s2f.report(ReportConvention::kFallbackExcluded);
  return report;
}

PipelineReport evaluate_pipeline(const GlobalModel& model, const FederatedSplit& split,
                                 const Catalog& catalog,
                                 const RetrieverTemplates& templates,
                                 const HybridConfig& hybrid,
                                 const RerankSettings* rerank) {
  const auto cache = ScoreCache::build(model, split.test_users, catalog, templates);
  return evaluate_cached(cache, split.test_users, catalog, hybrid, rerank);
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  return grid;
}

std::vector<SweepRow> sensitivity_sweep(const ScoreCache& cache,
                                        std::span<const UserSequence> users,
                                        const Catalog& catalog, const HybridConfig& base,
                                        std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (const double l : grid) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda grid value outside [0, 1]");
  }
  check_cache(cache, users);
  const auto order = user_order(users);
  std::vector<SweepRow> rows;
  for (const double lambda : grid) {
    MetricAccumulator acc;
    for (const auto u : order) {
      const auto fused = hybrid_scores(cache.at(u).id_logits, cache.at(u).text_logits, lambda);
      acc.add_rank(stage1_rank(fused, users[u], base.mask_history));
    }
    rows.push_back({lambda, acc.report(ReportConvention::kFallbackInclusive)});
  }
  (void)catalog;
  return rows;
}

std::vector<AblationRow> ablation(const ScoreCache& cache,
                                  std::span<const UserSequence> users,
                                  const Catalog& catalog, const HybridConfig& hybrid,
                                  const RerankSettings& rerank) {
  auto with_lambda = [&](double lambda) {
    auto cfg = hybrid;
    cfg.lambda = lambda;
    return cfg;
  };
  std::vector<AblationRow> rows;
  rows.push_back({"full", true, evaluate_cached(cache, users, catalog, hybrid, &rerank)});
  rows.push_back(
      {"w/o ID", true, evaluate_cached(cache, users, catalog, with_lambda(0.0), &rerank)});
  rows.push_back(
      {"w/o text", true, evaluate_cached(cache, users, catalog, with_lambda(1.0), &rerank)});
  rows.push_back({"w/o rerank", false, evaluate_cached(cache, users, catalog, hybrid, nullptr)});
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = pad("variant", 12) + kMetricHeader + "\n";
  for (const auto& row : rows) {
    out += pad(row.name, 12) + metric_cells(row.final_metrics()) + "\n";
  }
  return out;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::string out = pad("lambda", 12) + kMetricHeader + "\n";
  for (const auto& row : rows) {
    out += pad(fmt(row.lambda), 12) + metric_cells(row.stage1) + "\n";
  }
  return out;
}

std::string format_pipeline_table(const PipelineReport& report) {
  std::string out = pad("stage", 22) + kMetricHeader + "\n";
  out += pad("stage-1", 22) + metric_cells(report.stage1) + "\n";
  if (report.rerank_enabled) {
    out += pad("stage-2", 22) + metric_cells(report.stage2) + "\n";
    out += pad("stage-2 (filtered)", 22) + metric_cells(report.stage2_filtered) + "\n";
    out += "reranked=" + std::to_string(report.reranked) +
           " fallback=" + std::to_string(report.fallback) +
           " skipped=" + std::to_string(report.skipped) + "\n";
  }
  return out;
}

nlohmann::json to_json(const PipelineReport& report, bool include_users) {
  nlohmann::json j = {{"lambda", report.lambda},
                      {"rerank_enabled", report.rerank_enabled},
                      {"stage1", to_json(report.stage1)}};
  if (report.rerank_enabled) {
    j["stage2"] = to_json(report.stage2);
    j["stage2_filtered"] = to_json(report.stage2_filtered);
    j["outcomes"] = {{"reranked", report.reranked},
                     {"stage1-fallback", report.fallback},
                     {"skipped", report.skipped}};
  }
  if (include_users) {
    nlohmann::json users = nlohmann::json::array();
    for (const auto& u : report.users) {
      nlohmann::json entry = {{"user_id", u.user_id},
                              {"stage1_rank", u.stage1_rank},
                              {"stage2_rank", u.stage2_rank}};
      if (u.outcome) entry["source"] = to_string(u.outcome->source);
      users.push_back(std::move(entry));
    }
    j["users"] = std::move(users);
  }
  return j;
}

nlohmann::json to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    out.push_back({{"lambda", row.lambda}, {"stage1", to_json(row.stage1)}});
  }
  return out;
}

nlohmann::json to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    out.push_back({{"variant", row.name},
                   {"uses_rerank", row.uses_rerank},
                   {"metrics", to_json(row.final_metrics())},
                   {"report", to_json(row.report)}});
  }
  return out;
}

}  // namespace fedrec
