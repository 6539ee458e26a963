#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <mutex>
#include <set>

#include "fedrec/checkpoint.hpp"
#include "fedrec/errors.hpp"
#include "fedrec/federation.hpp"
#include "fedrec/rng.hpp"
#include "fedrec/synthetic.hpp"
#include "test_support.hpp"

namespace fedrec {
namespace {

TEST(FedAvg, WeightedExample) {
  const std::vector<std::vector<double>> params = {{1.0, 3.0}, {6.0, 8.0}};
  const std::vector<double> w = {2.0, 3.0};
  const auto out = fedavg(params, w);
  EXPECT_DOUBLE_EQ(out[0], (2.0 * 1.0 + 3.0 * 6.0) / 5.0);
  EXPECT_DOUBLE_EQ(out[1], (2.0 * 3.0 + 3.0 * 8.0) / 5.0);
  EXPECT_EQ(out, (std::vector<double>{4.0, 6.0}));
}

TEST(FedAvg, SingleClientAndIdenticalClientsAreFixedPoints) {
  Rng rng(1);
  std::vector<double> theta(257);
  for (auto& v : theta) v = rng.uniform(-1e3, 1e3);
  const std::vector<double> one = {0.37};
  EXPECT_EQ(fedavg(std::vector<std::vector<double>>{theta}, one), theta);
  const std::vector<double> three = {0.1, 7.0, 2.5};
  EXPECT_EQ(fedavg(std::vector<std::vector<double>>{theta, theta, theta}, three), theta);
}

TEST(FedAvg, IntegerWeightScalingIsBitIdentical) {
  Rng rng(2);
  std::vector<std::vector<double>> params(4, std::vector<double>(100));
  for (auto& p : params) {
    for (auto& v : p) v = rng.uniform(-5, 5);
  }
  const std::vector<double> w = {3, 1, 4, 1};
  const std::vector<double> w7 = {21, 7, 28, 7};
  EXPECT_EQ(fedavg(params, w), fedavg(params, w7));
}

TEST(FedAvg, ShapeAndDomainErrors) {
  const std::vector<std::vector<double>> ragged = {{1.0, 2.0}, {1.0}};
  const std::vector<double> w2 = {1.0, 1.0};
  EXPECT_THROW(fedavg(ragged, w2), ShapeError);
  const std::vector<std::vector<double>> ok = {{1.0}, {2.0}};
  EXPECT_THROW(fedavg(ok, std::vector<double>{1.0}), ShapeError);
  EXPECT_THROW(fedavg(ok, std::vector<double>{1.0, 0.0}), DomainError);
  EXPECT_THROW(fedavg(ok, std::vector<double>{1.0, -2.0}), DomainError);
  EXPECT_THROW(fedavg(std::vector<std::vector<double>>{}, std::vector<double>{}), ShapeError);
}

SynthConfig tiny_world() {
  SynthConfig cfg;
  cfg.num_clients = 2;
  cfg.items_per_client = 12;
  cfg.users_per_client = 16;
  cfg.num_attributes = 4;
  cfg.num_test_users = 6;
  cfg.test_items = 8;
  cfg.min_history = 2;
  cfg.max_history = 4;
  return cfg;
}

RoundConfig tiny_rounds() {
  RoundConfig rc;
  rc.global_epochs = 2;
  rc.id_cfg.dim = 4;
  rc.id_cfg.learning_rate = 0.1;
  rc.id_cfg.local_epochs = 2;
  rc.id_cfg.batch_size = 5;
  rc.id_cfg.seed = 11;
  rc.text_cfg.vocab_size = 128;
  rc.text_cfg.dim = 4;
  rc.text_cfg.learning_rate = 0.1;
  rc.text_cfg.local_epochs = 1;
  rc.text_cfg.batch_size = 8;
  rc.text_cfg.n_negatives = 5;
  rc.text_cfg.seed = 12;
  return rc;
}

TEST(Federation, SingleClientSingleRoundEqualsCentralTraining) {
  auto world = tiny_world();
  world.num_clients = 1;
  const auto data = synth_heterogeneous(world);
  auto rc = tiny_rounds();
  rc.global_epochs = 1;
  const auto init = init_global_model(data.catalog, rc);
  const auto fed = run_federated_training(data.split, data.catalog, init, rc);

  auto id_cfg = rc.id_cfg;
  id_cfg.seed = local_seed(rc.id_cfg.seed, 0, 0);
  auto text_cfg = rc.text_cfg;
  text_cfg.seed = local_seed(rc.text_cfg.seed, 0, 0);
  const auto& d = data.split.clients[0];
  EXPECT_EQ(fed.model.id_params, id_train_local(init.id_params, d, id_cfg));
  EXPECT_EQ(fed.model.text_params,
            text_train_local(init.text_params, d, data.catalog, text_cfg));
  EXPECT_EQ(fed.model.round, 1);
}

TEST(Federation, TwoEqualClientsAverageToTheMean) {
  const auto data = synth_heterogeneous(tiny_world());
  ASSERT_EQ(data.split.clients[0].size(), data.split.clients[1].size());
  auto rc = tiny_rounds();
  rc.global_epochs = 1;
  const auto init = init_global_model(data.catalog, rc);
  const auto fed = run_federated_training(data.split, data.catalog, init, rc);

  std::vector<IdRetrieverParams> local;
  for (std::size_t k = 0; k < 2; ++k) {
    auto cfg = rc.id_cfg;
    cfg.seed = local_seed(rc.id_cfg.seed, k, 0);
    local.push_back(id_train_local(init.id_params, data.split.clients[k], cfg));
  }
  const auto got = fed.model.id_params.values();
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double mean = (local[0].values()[i] + local[1].values()[i]) / 2.0;
    ASSERT_EQ(got[i], mean) << "coordinate " << i;
  }
}

TEST(Federation, ZeroLearningRatesKeepInitialModel) {
  const auto data = synth_heterogeneous(tiny_world());
  auto rc = tiny_rounds();
  rc.global_epochs = 3;
  rc.id_cfg.learning_rate = 0.0;
  rc.text_cfg.learning_rate = 0.0;
  const auto init = init_global_model(data.catalog, rc);
  const auto fed = run_federated_training(data.split, data.catalog, init, rc);
  EXPECT_EQ(fed.model.id_params, init.id_params);
  EXPECT_EQ(fed.model.text_params, init.text_params);
  EXPECT_EQ(fed.model.round, 3);
}

TEST(Federation, ParallelEqualsSerialBitForBit) {
  auto world = tiny_world();
  world.num_clients = 4;
  const auto data = synth_heterogeneous(world);
  auto serial = tiny_rounds();
  auto parallel = serial;
  parallel.client_parallelism = 4;
  const auto a = run_federated_training(data.split, data.catalog, serial);
  const auto b = run_federated_training(data.split, data.catalog, parallel);
  EXPECT_EQ(a.model.id_params, b.model.id_params);
  EXPECT_EQ(a.model.text_params, b.model.text_params);
  EXPECT_EQ(a.model.checksum(), b.model.checksum());
  ASSERT_EQ(a.log.size(), 8u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].round, b.log[i].round);
    EXPECT_EQ(a.log[i].client, b.log[i].client);
    EXPECT_EQ(a.log[i].loss_id, b.log[i].loss_id);
    EXPECT_EQ(a.log[i].loss_text, b.log[i].loss_text);
  }
}

TEST(Federation, TestUsersNeverReachTraining) {
  const auto data = synth_heterogeneous(tiny_world());
  std::set<std::string> test_ids;
  for (const auto& u : data.split.test_users) test_ids.insert(u.user_id);
  std::mutex mu;
  std::set<std::string> dispatched;
  auto rc = tiny_rounds();
  rc.client_parallelism = 2;
  rc.on_client_dispatch = [&](std::size_t, std::span<const UserSequence> d) {
    std::lock_guard lock(mu);
    for (const auto& u : d) dispatched.insert(u.user_id);
  };
  run_federated_training(data.split, data.catalog, rc);
  EXPECT_EQ(dispatched.size(), 32u);
  for (const auto& id : dispatched) EXPECT_FALSE(test_ids.count(id)) << id;
}

TEST(Federation, DivergenceNamesClientAndRound) {
  const auto data = synth_heterogeneous(tiny_world());
  auto rc = tiny_rounds();
  auto init = init_global_model(data.catalog, rc);
  const auto bad = data.split.clients[1].front().target;
  init.id_params.embedding(bad)[0] = std::numeric_limits<double>::infinity();
  try {
    run_federated_training(data.split, data.catalog, init, rc);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("round 0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("client"), std::string::npos) << e.what();
  }
}

TEST(Federation, EmptyClientIsConfigError) {
  auto data = synth_heterogeneous(tiny_world());
  data.split.clients[1].clear();
  EXPECT_THROW(run_federated_training(data.split, data.catalog, tiny_rounds()), ConfigError);
}

TEST(Federation, CustomAggregatorAndRoundHook) {
  const auto data = synth_heterogeneous(tiny_world());
  auto rc = tiny_rounds();
  int calls = 0;
  rc.aggregate = [&](std::span<const std::span<const double>> p, std::span<const double>) {
    ++calls;
    return std::vector<double>(p[0].begin(), p[0].end());
  };
  std::vector<int> rounds;
  rc.on_round_end = [&](const GlobalModel& m) { rounds.push_back(m.round); };
  run_federated_training(data.split, data.catalog, rc);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(rounds, (std::vector<int>{1, 2}));
}

TEST(Checkpoint, RoundTripsBothFamiliesAndDetectsCorruption) {
  testing::TempDir dir;
  const auto data = synth_heterogeneous(tiny_world());
  auto rc = tiny_rounds();
  rc.global_epochs = 1;
  const auto model = run_federated_training(data.split, data.catalog, rc).model;
  save_global_model(dir.path(), model);
  const auto back = load_global_model(dir.path());
  EXPECT_EQ(back.id_params, model.id_params);
  EXPECT_EQ(back.text_params, model.text_params);
  EXPECT_EQ(back.round, 1);
  EXPECT_EQ(back.checksum(), model.checksum());

  {
    std::fstream f(dir / "id_round1.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x7f');
  }
  EXPECT_THROW(load_id_checkpoint(dir / "id_round1"), IntegrityError);
  EXPECT_THROW(load_id_checkpoint(dir / "text_round1"), IntegrityError);
  EXPECT_THROW(load_text_checkpoint(dir / "missing"), ValidationError);
}

TEST(Checkpoint, ClientLogSerializes) {
  const ClientRoundMetrics m{2, 1, 0.5, 0.25, 3.0};
  const auto j = to_json(m);
  EXPECT_EQ(j.at("round"), 2);
  EXPECT_EQ(j.at("client"), 1);
  EXPECT_EQ(j.at("loss_id"), 0.5);
  EXPECT_EQ(j.at("loss_text"), 0.25);
  EXPECT_TRUE(j.contains("wall_ms"));
}

}  // namespace
}  // namespace fedrec
