#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "fedrec/core_data.hpp"

namespace fedrec {

// Single held-out target: Recall@K is a hit indicator, and NDCG@K is
// 1/log2(rank+1) inside the cutoff since the ideal DCG is 1.
double recall_at_k(std::span<const ItemIndex> ranked, ItemIndex gt, std::size_t k);
double ndcg_at_k(std::span<const ItemIndex> ranked, ItemIndex gt, std::size_t k);

// Same metrics from a known 1-based rank.
double recall_at_rank(std::size_t rank, std::size_t k);
double ndcg_at_rank(std::size_t rank, std::size_t k);

enum class ReportConvention { kFallbackInclusive, kFallbackExcluded };
std::string to_string(ReportConvention c);

struct MetricReport {
  std::size_t user_count = 0;
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double ndcg_at_5 = 0.0;
  double ndcg_at_10 = 0.0;
  ReportConvention convention = ReportConvention::kFallbackInclusive;

  bool operator==(const MetricReport&) const = default;
};

// Accumulates per-user ranks in the order they are added.
class MetricAccumulator {
 public:
  void add_rank(std::size_t rank);
  MetricReport report(ReportConvention convention) const;

 private:
  std::size_t count_ = 0;
  double r5_ = 0.0, r10_ = 0.0, n5_ = 0.0, n10_ = 0.0;
};

// Means are null when user_count is 0.
nlohmann::json to_json(const MetricReport& report);

}  // namespace fedrec
