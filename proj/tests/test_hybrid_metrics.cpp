#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrec/errors.hpp"
#include "fedrec/hybrid_rank.hpp"
#include "fedrec/metrics.hpp"
#include "fedrec/rng.hpp"
#include "test_support.hpp"

namespace fedrec {
namespace {

TEST(Softmax, ExamplesAndErrors) {
  const std::vector<double> constant(5, 3.25);
  for (const double p : softmax(constant)) EXPECT_DOUBLE_EQ(p, 0.2);
  const std::vector<double> two = {0.0, std::log(2.0)};
  const auto p = softmax(two);
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
  const std::vector<double> big = {1000.0, 1000.0};
  EXPECT_DOUBLE_EQ(softmax(big)[0], 0.5);
  EXPECT_THROW(softmax(std::vector<double>{}), DomainError);
  EXPECT_THROW(softmax(std::vector<double>{1.0, NAN}), DomainError);
  EXPECT_THROW(softmax(std::vector<double>{1.0, INFINITY}), DomainError);
}

TEST(HybridScores, EndpointsAndMidpoint) {
  const std::vector<double> id = {std::log(0.7), std::log(0.3)};
  const std::vector<double> text = {std::log(0.1), std::log(0.9)};
  const auto half = hybrid_scores(id, text, 0.5);
  EXPECT_NEAR(half[0], 0.4, 1e-15);
  EXPECT_NEAR(half[1], 0.6, 1e-15);
  EXPECT_EQ(hybrid_scores(id, text, 1.0), softmax(id));
  EXPECT_EQ(hybrid_scores(id, text, 0.0), softmax(text));
  EXPECT_THROW(hybrid_scores(id, std::vector<double>{1.0}, 0.5), ShapeError);
  EXPECT_THROW(hybrid_scores(id, text, 1.5), DomainError);
}

TEST(TopN, TieBreakIsSmallerItemIdFirst) {
  const auto catalog = testing::numbered_catalog(4);
  const std::vector<double> scores = {0.1, 0.3, 0.3, 0.3};
  const auto set = retrieve_top_n(scores, {0.5, 2, false}, {}, "u");
  EXPECT_EQ(set.items, (std::vector<ItemIndex>{1, 2}));
  EXPECT_TRUE(set.truncated);
  EXPECT_EQ(set.scores, (std::vector<double>{0.3, 0.3}));
  EXPECT_LT(catalog.at(set.items[0]).item_id, catalog.at(set.items[1]).item_id);
}

TEST(TopN, WholeCatalogAndMasking) {
  const std::vector<double> scores = {0.4, 0.1, 0.3, 0.2};
  const auto all = retrieve_top_n(scores, {0.5, 10, false}, {}, "u");
  EXPECT_EQ(all.items, (std::vector<ItemIndex>{0, 2, 3, 1}));
  EXPECT_FALSE(all.truncated);
  const std::vector<ItemIndex> history = {0, 3};
  const auto masked = retrieve_top_n(scores, {0.5, 10, true}, history, "u");
  EXPECT_EQ(masked.items, (std::vector<ItemIndex>{2, 1}));
  EXPECT_EQ(full_rank(scores, 1, history), 2u);
  EXPECT_EQ(full_rank(scores, 1), 4u);
}

TEST(TopN, TwentyFromLargeCatalog) {
  Rng rng(5);
  std::vector<double> scores(3650);
  for (auto& s : scores) s = rng.uniform01();
  const auto set = retrieve_top_n(scores, HybridConfig{}, {}, "u");
  ASSERT_EQ(set.items.size(), 20u);
  const auto order = full_ranking(scores);
  EXPECT_TRUE(std::equal(set.items.begin(), set.items.end(), order.begin()));
}

TEST(FullRank, AgreesWithFullRanking) {
  Rng rng(6);
  std::vector<double> scores(200);
  for (auto& s : scores) s = static_cast<double>(rng.uniform_index(20));
  const auto order = full_ranking(scores);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    EXPECT_EQ(full_rank(scores, order[pos]), pos + 1);
  }
}

TEST(CandidateSet, JsonRoundTrip) {
  const auto catalog = testing::numbered_catalog(5);
  CandidateSet set{"u9", {4, 1}, {0.5, 0.25}, true};
  const auto back = candidate_set_from_json(to_json(set, catalog), catalog);
  EXPECT_EQ(back.user_id, "u9");
  EXPECT_EQ(back.items, set.items);
  EXPECT_EQ(back.scores, set.scores);
  EXPECT_THROW(candidate_set_from_json(nlohmann::json{{"items", {"i00"}}}, catalog),
               ValidationError);
}

TEST(HybridConfig, Validation) {
  EXPECT_THROW((HybridConfig{-0.1, 20, false}).validate(), ConfigError);
  EXPECT_THROW((HybridConfig{0.5, 0, false}).validate(), ConfigError);
  EXPECT_NO_THROW((HybridConfig{1.0, 1, true}).validate());
}

TEST(Metrics, SpotValues) {
  const std::vector<ItemIndex> ranked = {7, 3, 9, 1, 4, 8, 2, 0, 5, 6, 10};
  EXPECT_EQ(recall_at_k(ranked, 7, 5), 1.0);
  EXPECT_EQ(recall_at_k(ranked, 8, 5), 0.0);
  EXPECT_EQ(ndcg_at_k(ranked, 7, 5), 1.0);
  EXPECT_EQ(ndcg_at_k(ranked, 9, 5), 1.0 / std::log2(4.0));
  EXPECT_EQ(ndcg_at_k(ranked, 9, 5), 0.5);
  EXPECT_EQ(ndcg_at_k(ranked, 10, 10), 0.0);
  EXPECT_EQ(recall_at_k(ranked, 42, 10), 0.0);
  EXPECT_THROW(recall_at_k(ranked, 7, 0), PreconditionError);
  EXPECT_THROW(ndcg_at_rank(1, 0), PreconditionError);
}

TEST(Metrics, BatchMeanIsBruteForceCount) {
  Rng rng(13);
  MetricAccumulator acc;
  int hits = 0;
  for (int u = 0; u < 100; ++u) {
    const auto rank = 1 + rng.uniform_index(30);
    acc.add_rank(rank);
    if (rank <= 10) ++hits;
  }
  const auto r = acc.report(ReportConvention::kFallbackInclusive);
  EXPECT_EQ(r.user_count, 100u);
  EXPECT_EQ(r.recall_at_10, hits / 100.0);
}

TEST(Metrics, BoundsMonotoneAndRecallDominates) {
  Rng rng(14);
  for (int t = 0; t < 200; ++t) {
    const auto rank = 1 + rng.uniform_index(15);
    const double r5 = recall_at_rank(rank, 5), r10 = recall_at_rank(rank, 10);
    const double n5 = ndcg_at_rank(rank, 5), n10 = ndcg_at_rank(rank, 10);
    for (const double v : {r5, r10, n5, n10}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(r5, r10);
    EXPECT_LE(n5, n10);
    EXPECT_LE(n5, r5);
    EXPECT_LE(n10, r10);
  }
}

TEST(Metrics, EmptyReportHasNullMetrics) {
  const auto r = MetricAccumulator{}.report(ReportConvention::kFallbackExcluded);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("user_count"), 0);
  EXPECT_TRUE(j.at("recall@5").is_null());
  EXPECT_TRUE(j.at("ndcg@10").is_null());
  EXPECT_EQ(j.at("convention"), "fallback-excluded");
}

}  // namespace
}  // namespace fedrec
