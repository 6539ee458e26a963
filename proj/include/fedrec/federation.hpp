#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "fedrec/core_data.hpp"
#include "fedrec/id_retriever.hpp"
#include "fedrec/text_retriever.hpp"

namespace fedrec {

// Size-weighted coordinatewise mean:
//   out_i = sum_k (w_k / sum_j w_j) * theta^k_i
// accumulated left to right over clients (compensated), then clamped into
// [min_k theta^k_i, max_k theta^k_i] so rounding never leaves the hull.
std::vector<double> fedavg(std::span<const std::span<const double>> params,
                           std::span<const double> weights);
std::vector<double> fedavg(const std::vector<std::vector<double>>& params,
                           std::span<const double> weights);

// Injection point for alternative aggregation (secure aggregation, DP noise).
using Aggregator = std::function<std::vector<double>(
    std::span<const std::span<const double>>, std::span<const double>)>;

struct GlobalModel {
  IdRetrieverParams id_params;
  TextEncoderParams text_params;
  int round = 0;

  std::uint64_t checksum() const;
};

struct ClientRoundMetrics {
  int round = 0;
  std::size_t client = 0;
  double loss_id = 0.0;
  double loss_text = 0.0;
  double wall_ms = 0.0;
};

nlohmann::json to_json(const ClientRoundMetrics& m);

struct RoundConfig {
  int global_epochs = 5;
  IdTrainConfig id_cfg;
  TextTrainConfig text_cfg;
  std::size_t client_parallelism = 1;
  bool train_id = true;
  bool train_text = true;
  Aggregator aggregate;  // defaults to fedavg when empty
  // Called with every dataset handed to a client for local training.
  std::function<void(std::size_t client, std::span<const UserSequence>)>
      on_client_dispatch;
  // Called after each aggregation with the new global model.
  std::function<void(const GlobalModel&)> on_round_end;
};

struct TrainingResult {
  GlobalModel model;
  std::vector<ClientRoundMetrics> log;  // ordered by (round, client)
};

// Seed of client `client`'s local stream in `round` for one model family.
std::uint64_t local_seed(std::uint64_t base_seed, std::size_t client, int round);

GlobalModel init_global_model(const Catalog& catalog, const RoundConfig& cfg);

TrainingResult run_federated_training(const FederatedSplit& split,
                                      const Catalog& catalog,
                                      const RoundConfig& cfg);
TrainingResult run_federated_training(const FederatedSplit& split,
                                      const Catalog& catalog, GlobalModel initial,
                                      const RoundConfig& cfg);

}  // namespace fedrec
