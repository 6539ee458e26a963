#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "fedrec/errors.hpp"
#include "fedrec/id_retriever.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {
namespace {

// Hand-unrolled h_t = a*h_{t-1} + B e_{x_t} for d = 1.
double unrolled_state_d1(double a, double b, std::span<const double> inputs) {
  double h = 0.0;
  for (const double e : inputs) h = a * h + b * e;
  return h;
}

TEST(IdForward, ScalarRecurrenceAgainstHandUnrolling) {
  IdRetrieverParams p(2, 1);
  p.embedding(0)[0] = 1.0;
  p.embedding(1)[0] = 2.0;
  p.raw_decay()[0] = 0.0;  // sigmoid(0) = 0.5
  p.input_map()[0] = 1.0;
  const std::vector<ItemIndex> history = {0, 1};
  const double inputs[] = {1.0, 2.0};
  const double h = unrolled_state_d1(0.5, 1.0, inputs);
  const auto logits = id_forward(p, history);
  ASSERT_EQ(logits.size(), 2u);
  EXPECT_DOUBLE_EQ(logits[0], h * 1.0);
  EXPECT_DOUBLE_EQ(logits[1], h * 2.0);
  EXPECT_DOUBLE_EQ(logits[0], 2.5);
  EXPECT_DOUBLE_EQ(logits[1], 5.0);
}

TEST(IdForward, ZeroEmbeddingsGiveZeroLogits) {
  auto p = init_id_params(5, 3, 1);
  for (auto& v : p.embeddings()) v = 0.0;
  const std::vector<ItemIndex> history = {1, 2};
  for (const double l : id_forward(p, history)) EXPECT_EQ(l, 0.0);
}

TEST(IdForward, ShapeAndErrors) {
  const auto p = init_id_params(7, 4, 3);
  const std::vector<ItemIndex> history = {6, 0, 3};
  const auto logits = id_forward(p, history);
  EXPECT_EQ(logits.size(), 7u);
  for (const double l : logits) EXPECT_TRUE(std::isfinite(l));
  EXPECT_THROW(id_forward(p, std::vector<ItemIndex>{}), PreconditionError);
  EXPECT_THROW(id_forward(p, std::vector<ItemIndex>{7}), LookupError);
  EXPECT_THROW(id_forward(p, history, 2), PreconditionError);
}

TEST(IdForward, DecayStaysInUnitInterval) {
  IdRetrieverParams p(1, 3);
  p.raw_decay()[0] = -800.0;
  p.raw_decay()[1] = 0.0;
  p.raw_decay()[2] = 800.0;
  for (const double a : p.decay()) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(IdCeLoss, UniformLogitsGiveLogOfCatalogSize) {
  auto p = init_id_params(4, 2, 5);
  for (auto& v : p.embeddings()) v = 0.0;
  const std::vector<UserSequence> batch = {{"u", {1, 2}, 3}};
  EXPECT_NEAR(id_ce_loss(p, batch), std::log(4.0), 1e-15);
}

TEST(IdCeLoss, PeakedLogits) {
  // h = B e_1 = [0, 1], so logits = [<h,e_0>, ...] = [10, 0, 0, 0].
  IdRetrieverParams p(4, 2);
  auto e0 = p.embedding(0);
  e0[1] = 10.0;
  p.embedding(1)[0] = 1.0;
  p.input_map()[2] = 1.0;  // B[1][0]
  const std::vector<UserSequence> batch = {{"u", {1}, 0}};
  const auto logits = id_forward(p, batch[0].history);
  ASSERT_EQ(logits, (std::vector<double>{10.0, 0.0, 0.0, 0.0}));
  const double expected = std::log1p(3.0 * std::exp(-10.0));
  EXPECT_NEAR(id_ce_loss(p, batch), expected, 1e-15);
  EXPECT_NEAR(expected, 1.3619051493825e-4, 1e-16);
}

TEST(IdCeLoss, DuplicatedExampleKeepsMean) {
  const auto p = init_id_params(6, 3, 9);
  const UserSequence s{"u", {1, 4, 2}, 5};
  const std::vector<UserSequence> one = {s}, two = {s, s};
  EXPECT_NEAR(id_ce_loss(p, one), id_ce_loss(p, two), 1e-15);
}

TEST(IdCeGradient, MatchesFiniteDifferences) {
  const auto p = init_id_params(6, 4, 21);
  auto params = p;
  Rng rng(4);
  for (auto& v : params.values()) v = rng.uniform(-0.8, 0.8);
  const std::vector<UserSequence> batch = {
      {"a", {0, 3, 5, 1}, 2}, {"b", {4}, 4}, {"c", {2, 2, 1}, 0}};
  double loss = 0.0;
  const auto grad = id_ce_gradient(params, batch, &loss);
  EXPECT_NEAR(loss, id_ce_loss(params, batch), 1e-14);

  const double eps = 1e-5;
  double diff2 = 0.0, norm2 = 0.0;
  auto probe = params;
  for (std::size_t i = 0; i < probe.values().size(); ++i) {
    const double saved = probe.values()[i];
    probe.values()[i] = saved + eps;
    const double up = id_ce_loss(probe, batch);
    probe.values()[i] = saved - eps;
    const double down = id_ce_loss(probe, batch);
    probe.values()[i] = saved;
    const double fd = (up - down) / (2 * eps);
    const double an = grad.values()[i];
    EXPECT_LE(std::abs(fd - an), 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-8)
        << "coordinate " << i;
    diff2 += (fd - an) * (fd - an);
    norm2 += fd * fd + an * an;
  }
  EXPECT_LT(std::sqrt(diff2 / norm2), 1e-4);
}

std::vector<UserSequence> toy_data() {
  return {{"a", {0, 1}, 2}, {"b", {1, 2}, 3}, {"c", {2, 3}, 4}, {"d", {3, 4}, 5},
          {"e", {4, 5}, 0}, {"f", {5, 0}, 1}, {"g", {0, 2}, 4}};
}

TEST(IdTrain, ZeroLearningRateKeepsParametersBitForBit) {
  const auto p = init_id_params(6, 4, 2);
  IdTrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.local_epochs = 3;
  cfg.batch_size = 2;
  EXPECT_EQ(id_train_local(p, toy_data(), cfg), p);
  cfg.optimizer = OptimizerKind::kAdam;
  EXPECT_EQ(id_train_local(p, toy_data(), cfg), p);
}

TEST(IdTrain, OneSmallStepLowersLoss) {
  const auto p = init_id_params(6, 4, 2);
  const std::vector<UserSequence> one = {{"a", {0, 1, 3}, 2}};
  IdTrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.local_epochs = 1;
  cfg.batch_size = 1;
  const auto after = id_train_local(p, one, cfg);
  EXPECT_LT(id_ce_loss(after, one), id_ce_loss(p, one));
}

TEST(IdTrain, SgdAndAdamFitToyData) {
  const auto data = toy_data();
  for (const auto opt : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    const auto p = init_id_params(6, 8, 2);
    IdTrainConfig cfg;
    cfg.learning_rate = opt == OptimizerKind::kSgd ? 0.5 : 0.05;
    cfg.local_epochs = 60;
    cfg.batch_size = 4;
    cfg.optimizer = opt;
    LocalTrainStats stats;
    const auto after = id_train_local(p, data, cfg, &stats);
    EXPECT_LT(id_ce_loss(after, data), 0.5 * id_ce_loss(p, data)) << to_string(opt);
    EXPECT_EQ(stats.steps, 60u * 2u);
  }
}

TEST(IdTrain, DeterministicGivenSeed) {
  const auto p = init_id_params(6, 4, 2);
  IdTrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.local_epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 17;
  EXPECT_EQ(id_train_local(p, toy_data(), cfg), id_train_local(p, toy_data(), cfg));
}

TEST(IdTrain, NonFiniteLossNamesEpochAndBatch) {
  auto p = init_id_params(6, 4, 2);
  p.embedding(0)[0] = std::numeric_limits<double>::quiet_NaN();
  IdTrainConfig cfg;
  cfg.local_epochs = 2;
  try {
    id_train_local(p, toy_data(), cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0, batch 0"), std::string::npos) << e.what();
  }
  EXPECT_THROW(id_train_local(p, std::vector<UserSequence>{}, cfg), PreconditionError);
}

TEST(MakeBatches, PartitionOfAllIndices) {
  Rng rng(8);
  const auto batches = make_batches(10, 3, rng);
  ASSERT_EQ(batches.size(), 4u);
  std::multiset<std::size_t> all;
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 3u);
    all.insert(b.begin(), b.end());
  }
  EXPECT_EQ(all.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all.count(i), 1u);
}

TEST(Optimizer, NamesRoundTrip) {
  EXPECT_EQ(optimizer_from_string("adam"), OptimizerKind::kAdam);
  EXPECT_EQ(to_string(OptimizerKind::kSgd), "sgd");
  EXPECT_THROW(optimizer_from_string("adamw"), ConfigError);
}

}  // namespace
}  // namespace fedrec
