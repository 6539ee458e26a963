#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fedrec/errors.hpp"
#include "fedrec/hash.hpp"
#include "fedrec/rng.hpp"
#include "fedrec/text_retriever.hpp"
#include "test_support.hpp"

namespace fedrec {
namespace {

Catalog movie_catalog() {
  return Catalog({{"m1", "The Shawshank Redemption", {"Thriller"}},
                  {"m2", "Ex Machina", {"Sci-Fi", "Thriller"}},
                  {"m3", "Whiplash", {"Drama"}},
                  {"m4", "Unchained", {}}});
}

TEST(RenderQuery, TwoItemHistory) {
  const auto c = movie_catalog();
  const std::vector<ItemIndex> h = {c.index_of("m1"), c.index_of("m2")};
  EXPECT_EQ(render_query(h, c, {}).text,
            "query: The Shawshank Redemption, an item about Thriller; "
            "Ex Machina, an item about Sci-Fi, Thriller");
}

TEST(RenderQuery, AttributesOffAndLastN) {
  const auto c = movie_catalog();
  const std::vector<ItemIndex> one = {c.index_of("m3")};
  EXPECT_EQ(render_query(one, c, {false, std::nullopt, "item"}).text, "query: Whiplash");
  const std::vector<ItemIndex> three = {c.index_of("m1"), c.index_of("m2"), c.index_of("m3")};
  EXPECT_EQ(render_query(three, c, {true, 1, "item"}).text,
            "query: Whiplash, an item about Drama");
  EXPECT_EQ(render_query(three, c, {true, 1, "movie"}).text,
            "query: Whiplash, a movie about Drama");
  EXPECT_THROW(render_query(std::vector<ItemIndex>{}, c, {}), PreconditionError);
  EXPECT_THROW(render_query(std::vector<ItemIndex>{9}, c, {}), LookupError);
}

TEST(RenderPassage, Goldens) {
  const auto c = movie_catalog();
  EXPECT_EQ(render_passage(c.index_of("m3"), c, {}).text, "passage: Whiplash, an item about Drama");
  EXPECT_EQ(render_passage(c.index_of("m4"), c, {}).text, "passage: Unchained");
}

TEST(Tokenize, LowercasedWordsIntoSortedBuckets) {
  EXPECT_EQ(split_tokens("Query: Ex-Machina, an ITEM"),
            (std::vector<std::string>{"query", "ex", "machina", "an", "item"}));
  const auto t = tokenize("b a c a", 1u << 20);
  EXPECT_TRUE(std::is_sorted(t.begin(), t.end()));
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(tokenize("c a b a", 1u << 20), t);
  EXPECT_EQ(tokenize("a", 97).at(0), fnv1a64("a") % 97);
  EXPECT_THROW(tokenize("a", 0), ConfigError);
}

TEST(Encode, UnitNormDeterministicOrderFree) {
  const auto p = init_text_params(256, 8, 0.05, 3);
  const auto a = encode(p, "alpha beta gamma beta");
  double n2 = 0.0;
  for (const double v : a) n2 += v * v;
  EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-12);
  EXPECT_EQ(a, encode(p, "alpha beta gamma beta"));
  EXPECT_EQ(a, encode(p, "beta gamma beta alpha"));
  EXPECT_THROW(encode(p, " ;; "), EncodingError);
}

TEST(Encode, ZeroParametersAreDegenerate) {
  TextEncoderParams p(16, 4, 0.05);
  EXPECT_THROW(encode(p, "anything"), EncodingError);
}

TEST(PairScore, SelfOrthogonalAndDotOracle) {
  const std::vector<double> q = {0.6, 0.8};
  EXPECT_DOUBLE_EQ(pair_score(q, q, 0.05), 20.0);
  const std::vector<double> o = {0.8, -0.6};
  EXPECT_NEAR(pair_score(q, o, 0.05), 0.0, 1e-15);
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(6), b(6);
    double na = 0, nb = 0;
    for (int i = 0; i < 6; ++i) {
      a[i] = rng.uniform(-1, 1);
      b[i] = rng.uniform(-1, 1);
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    double dot = 0;
    for (int i = 0; i < 6; ++i) {
      a[i] /= std::sqrt(na);
      b[i] /= std::sqrt(nb);
    }
    for (int i = 0; i < 6; ++i) dot += a[i] * b[i];
    EXPECT_NEAR(pair_score(a, b, 0.07), dot / 0.07, 1e-12);
  }
}

// Vocabulary size at which the given words land in distinct buckets.
std::size_t distinct_vocab(const std::vector<std::string>& words) {
  for (std::size_t v = 8;; ++v) {
    std::set<std::uint64_t> b;
    for (const auto& w : words) b.insert(fnv1a64(w) % v);
    if (b.size() == words.size()) return v;
  }
}

void set_row(TextEncoderParams& p, std::string_view word, std::vector<double> row) {
  const auto bucket = fnv1a64(word) % p.vocab_size();
  auto values = p.mutable_values();
  std::copy(row.begin(), row.end(), values.begin() + bucket * p.dim());
}

TextEncoderParams two_axis_params(double temperature) {
  const auto v = distinct_vocab({"query", "passage", "x", "y"});
  TextEncoderParams p(v, 2, temperature);
  auto values = p.mutable_values();
  values[p.projection_offset()] = 1.0;
  values[p.projection_offset() + 3] = 1.0;
  set_row(p, "x", {1.0, 0.0});
  set_row(p, "y", {0.0, 1.0});
  return p;
}

TEST(InfoNce, OneNegativeScoresTwoAndZero) {
  // Query and positive both encode to e_1, the negative to e_2; tau = 0.5
  // gives scores 2 and 0.
  const auto p = two_axis_params(0.5);
  const Catalog c({{"px", "x", {}}, {"py", "y", {}}});
  const std::vector<ContrastiveExample> batch = {{"query: x", c.index_of("px")}};
  const auto q = encode(p, "query: x");
  EXPECT_DOUBLE_EQ(pair_score(q, encode(p, "passage: x"), 0.5), 2.0);
  EXPECT_DOUBLE_EQ(pair_score(q, encode(p, "passage: y"), 0.5), 0.0);
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  EXPECT_NEAR(infonce_loss(p, batch, c, 1, 0), expected, 1e-12);
  EXPECT_NEAR(expected, 0.126928, 1e-6);
}

TEST(InfoNce, EqualScoresGiveLogNPlusOne) {
  // Every passage encodes to the same vector.
  const auto v = distinct_vocab({"query", "passage", "x"});
  TextEncoderParams p(v, 2, 0.05);
  auto values = p.mutable_values();
  values[p.projection_offset()] = 1.0;
  values[p.projection_offset() + 3] = 1.0;
  set_row(p, "x", {1.0, 1.0});
  const Catalog c({{"a", "x", {}}, {"b", "x", {}}, {"c", "x", {}}, {"d", "x", {}}});
  const std::vector<ContrastiveExample> batch = {{"query: x", 0}, {"query: x", 2}};
  EXPECT_NEAR(infonce_loss(p, batch, c, 3, 9), std::log(4.0), 1e-12);
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  const Catalog c({{"a", "red apple", {"fruit"}},
                   {"b", "green pear", {"fruit"}},
                   {"c", "blue car", {"vehicle"}},
                   {"d", "red truck", {"vehicle"}},
                   {"e", "yellow banana", {"fruit", "snack"}}});
  auto p = init_text_params(64, 8, 0.1, 5);
  Rng rng(6);
  for (auto& v : p.mutable_values()) v += rng.uniform(-0.3, 0.3);
  const std::vector<ContrastiveExample> batch = {
      {"query: red apple, an item about fruit", 1},
      {"query: blue car; red truck", 3},
      {"query: yellow banana", 4}};
  const auto grad = infonce_gradient(p, batch, c, 3, 77);
  EXPECT_NEAR(grad.loss, infonce_loss(p, batch, c, 3, 77), 1e-13);
  const auto dense = grad.to_dense(p);

  const double eps = 1e-5;
  double diff2 = 0.0, norm2 = 0.0;
  auto probe = p;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    const double saved = probe.values()[i];
    probe.mutable_values()[i] = saved + eps;
    const double up = infonce_loss(probe, batch, c, 3, 77);
    probe.mutable_values()[i] = saved - eps;
    const double down = infonce_loss(probe, batch, c, 3, 77);
    probe.mutable_values()[i] = saved;
    const double fd = (up - down) / (2 * eps);
    EXPECT_LE(std::abs(fd - dense[i]),
              1e-4 * std::max(std::abs(fd), std::abs(dense[i])) + 1e-8)
        << "coordinate " << i;
    diff2 += (fd - dense[i]) * (fd - dense[i]);
    norm2 += fd * fd + dense[i] * dense[i];
  }
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-4);
}

TEST(SampleNegatives, ExcludePositiveNoRepeatsDeterministic) {
  std::vector<ContrastiveExample> batch;
  for (ItemIndex i = 0; i < 10; ++i) batch.push_back({"q", i});
  const auto a = sample_negatives(batch, 10, 9, 4);
  EXPECT_EQ(a, sample_negatives(batch, 10, 9, 4));
  for (std::size_t m = 0; m < batch.size(); ++m) {
    std::set<ItemIndex> s(a[m].begin(), a[m].end());
    EXPECT_EQ(s.size(), 9u);
    EXPECT_FALSE(s.count(batch[m].positive));
  }
  EXPECT_THROW(sample_negatives(batch, 10, 10, 4), ConfigError);
}

TEST(TextTrain, ZeroLearningRateAndImprovement) {
  const auto catalog = testing::numbered_catalog(12);
  std::vector<UserSequence> data;
  for (ItemIndex i = 0; i < 12; ++i) {
    data.push_back({"u" + std::to_string(i), {static_cast<ItemIndex>((i + 3) % 12)}, i});
  }
  TextTrainConfig cfg;
  cfg.vocab_size = 512;
  cfg.dim = 8;
  cfg.n_negatives = 4;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  const auto p = init_text_params(cfg.vocab_size, cfg.dim, cfg.temperature, 1);
  EXPECT_EQ(text_train_local(p, data, catalog, cfg), p);

  cfg.learning_rate = 0.05;
  cfg.local_epochs = 30;
  cfg.n_negatives = 11;
  cfg.batch_size = 12;
  const auto examples = make_contrastive_examples(data, catalog, cfg.query_template);
  const auto trained = text_train_local(p, data, catalog, cfg);
  EXPECT_LT(infonce_loss(trained, examples, catalog, 11, 1, cfg.passage_template),
            infonce_loss(p, examples, catalog, 11, 1, cfg.passage_template));
  EXPECT_EQ(text_train_local(p, data, catalog, cfg), trained);
}

TEST(PassageIndex, MatchesDirectScoringAndDetectsStaleParams) {
  const auto catalog = movie_catalog();
  auto p = init_text_params(128, 6, 0.05, 8);
  const PassageIndex index(p, catalog, {});
  const std::string query = "query: Whiplash, an item about Drama";
  const auto direct = text_score_catalog(p, query, catalog);
  EXPECT_EQ(index.score(p, query), direct);
  p.mutable_values()[0] += 0.5;
  EXPECT_THROW(index.score(p, query), PreconditionError);
}

}  // namespace
}  // namespace fedrec
