#include "fedrec/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fedrec/errors.hpp"

namespace fedrec {

double recall_at_rank(std::size_t rank, std::size_t k) {
  if (k == 0) throw PreconditionError("metric cutoff k must be >= 1");
  return rank >= 1 && rank <= k ? 1.0 : 0.0;
}

double ndcg_at_rank(std::size_t rank, std::size_t k) {
  if (k == 0) throw PreconditionError("metric cutoff k must be >= 1");
  if (rank < 1 || rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

namespace {

std::size_t rank_of(std::span<const ItemIndex> ranked, ItemIndex gt) {
  const auto it = std::find(ranked.begin(), ranked.end(), gt);
  return it == ranked.end() ? 0 : static_cast<std::size_t>(it - ranked.begin()) + 1;
}

}  // namespace

double recall_at_k(std::span<const ItemIndex> ranked, ItemIndex gt, std::size_t k) {
  return recall_at_rank(rank_of(ranked, gt), k);
}

double ndcg_at_k(std::span<const ItemIndex> ranked, ItemIndex gt, std::size_t k) {
  return ndcg_at_rank(rank_of(ranked, gt), k);
}

std::string to_string(ReportConvention c) {
  return c == ReportConvention::kFallbackInclusive ? "fallback-inclusive" : "fallback-excluded";
}

void MetricAccumulator::add_rank(std::size_t rank) {
  ++count_;
  r5_ += recall_at_rank(rank, 5);
  r10_ += recall_at_rank(rank, 10);
  n5_ += ndcg_at_rank(rank, 5);
  n10_ += ndcg_at_rank(rank, 10);
}

MetricReport MetricAccumulator::report(ReportConvention convention) const {
  MetricReport r;
  r.convention = convention;
  r.user_count = count_;
  if (count_ == 0) return r;
  const double n = static_cast<double>(count_);
  r.recall_at_5 = r5_ / n;
  r.recall_at_10 = r10_ / n;
  r.ndcg_at_5 = n5_ / n;
  r.ndcg_at_10 = n10_ / n;
  return r;
}

nlohmann::json to_json(const MetricReport& report) {
  const auto value = [&](double v) -> nlohmann::json {
    return report.user_count == 0 ? nlohmann::json(nullptr) : nlohmann::json(v);
  };
  return {{"convention", to_string(report.convention)},
          {"user_count", report.user_count},
          {"recall@5", value(report.recall_at_5)},
          {"recall@10", value(report.recall_at_10)},
          {"ndcg@5", value(report.ndcg_at_5)},
          {"ndcg@10", value(report.ndcg_at_10)}};
}

}  // namespace fedrec
