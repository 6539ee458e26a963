#include "fedrec/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "fedrec/errors.hpp"
#include "fedrec/hash.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

std::vector<double> fedavg(std::span<const std::span<const double>> params,
                           std::span<const double> weights) {
  if (params.empty()) throw ShapeError("fedavg: no parameter vectors");
  if (params.size() != weights.size()) {
    throw ShapeError("fedavg: " + std::to_string(params.size()) + " vectors but " +
                     std::to_string(weights.size()) + " weights");
  }
  const std::size_t n = params.front().size();
  for (const auto& p : params) {
    if (p.size() != n) throw ShapeError("fedavg: parameter vectors differ in length");
  }
  double total = 0.0;
  for (const double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw DomainError("fedavg: weights must be finite and strictly positive");
    }
    total += w;
  }
  std::vector<double> share(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) share[k] = weights[k] / total;

  // Compensated dot product: as accurate as accumulating in twice the
  // working precision and rounding once.
  std::vector<double> out(n, 0.0);
  std::vector<double> carry(n, 0.0);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    for (std::size_t i = 0; i < n; ++i) {
      const double prod = share[k] * p[i];
      const double prod_err = std::fma(share[k], p[i], -prod);
      const double sum = out[i] + prod;
      const double bv = sum - out[i];
      const double sum_err = (out[i] - (sum - bv)) + (prod - bv);
      out[i] = sum;
      carry[i] += sum_err + prod_err;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out[i] += carry[i];
  for (std::size_t i = 0; i < n; ++i) {
    double lo = params[0][i];
    double hi = lo;
    for (std::size_t k = 1; k < params.size(); ++k) {
      lo = std::min(lo, params[k][i]);
      hi = std::max(hi, params[k][i]);
    }
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

std::vector<double> fedavg(const std::vector<std::vector<double>>& params,
                           std::span<const double> weights) {
  std::vector<std::span<const double>> views(params.begin(), params.end());
  return fedavg(views, weights);
}

std::uint64_t GlobalModel::checksum() const {
  auto h = fnv1a64_doubles(id_params.values());
  h = fnv1a64_doubles(text_params.values(), h);
  return fnv1a64(std::to_string(round), h);
}

nlohmann::json to_json(const ClientRoundMetrics& m) {
  return {{"round", m.round},
          {"client", m.client},
          {"loss_id", m.loss_id},
          {"loss_text", m.loss_text},
          {"wall_ms", m.wall_ms}};
}

std::uint64_t local_seed(std::uint64_t base_seed, std::size_t client, int round) {
  return derive_seed(base_seed, client, static_cast<std::uint64_t>(round));
}

GlobalModel init_global_model(const Catalog& catalog, const RoundConfig& cfg) {
  if (catalog.empty()) throw ConfigError("cannot initialise a model on an empty catalog");
  GlobalModel model;
  model.id_params = init_id_params(catalog.size(), cfg.id_cfg.dim,
                                   derive_seed(cfg.id_cfg.seed, 0x1d));
  model.text_params = init_text_params(cfg.text_cfg.vocab_size, cfg.text_cfg.dim,
                                       cfg.text_cfg.temperature,
                                       derive_seed(cfg.text_cfg.seed, 0x7e));
  return model;
}

namespace {

struct ClientOutcome {
  IdRetrieverParams id_params;
  TextEncoderParams text_params;
  ClientRoundMetrics metrics;
  std::exception_ptr error;
};

ClientOutcome train_client(const GlobalModel& global, std::span<const UserSequence> data,
                           const Catalog& catalog, const RoundConfig& cfg,
                           std::size_t client, int round) {
  ClientOutcome out;
  out.metrics.round = round;
  out.metrics.client = client;
  const auto start = std::chrono::steady_clock::now();
  if (cfg.train_id) {
    auto id_cfg = cfg.id_cfg;
    id_cfg.seed = local_seed(cfg.id_cfg.seed, client, round);
    LocalTrainStats stats;
    out.id_params = id_train_local(global.id_params, data, id_cfg, &stats);
    out.metrics.loss_id = stats.mean_loss;
  }
  if (cfg.train_text) {
    auto text_cfg = cfg.text_cfg;
    text_cfg.seed = local_seed(cfg.text_cfg.seed, client, round);
    LocalTrainStats stats;
    out.text_params = text_train_local(global.text_params, data, catalog, text_cfg, &stats);
    out.metrics.loss_text = stats.mean_loss;
  }
  out.metrics.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return out;
}

}  // namespace

TrainingResult run_federated_training(const FederatedSplit& split,
                                      const Catalog& catalog,
                                      const RoundConfig& cfg) {
  return run_federated_training(split, catalog, init_global_model(catalog, cfg), cfg);
}

TrainingResult run_federated_training(const FederatedSplit& split,
                                      const Catalog& catalog, GlobalModel initial,
                                      const RoundConfig& cfg) {
  if (cfg.global_epochs < 1) throw ConfigError("global_epochs must be >= 1");
  if (cfg.client_parallelism == 0) throw ConfigError("client_parallelism must be >= 1");
  if (split.clients.empty()) throw ConfigError("split has no clients");
  for (std::size_t k = 0; k < split.clients.size(); ++k) {
    if (split.clients[k].empty()) {
      throw ConfigError("client " + std::to_string(k) + " has no training data");
    }
  }
  if (initial.id_params.num_items() != catalog.size()) {
    throw ShapeError("id retriever covers " +
                     std::to_string(initial.id_params.num_items()) +
                     " items but the catalog has " + std::to_string(catalog.size()));
  }
  const Aggregator aggregate =
      cfg.aggregate ? cfg.aggregate
                    : Aggregator([](std::span<const std::span<const double>> p,
                                    std::span<const double> w) { return fedavg(p, w); });

  const std::size_t num_clients = split.clients.size();
  std::vector<double> weights(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) {
    weights[k] = static_cast<double>(split.clients[k].size());
  }

  TrainingResult result{std::move(initial), {}};
  auto& global = result.model;
  for (int round = 0; round < cfg.global_epochs; ++round) {
    std::vector<ClientOutcome> outcomes(num_clients);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (auto k = next.fetch_add(1); k < num_clients; k = next.fetch_add(1)) {
        try {
          if (cfg.on_client_dispatch) cfg.on_client_dispatch(k, split.clients[k]);
          outcomes[k] = train_client(global, split.clients[k], catalog, cfg, k, round);
        } catch (...) {
          outcomes[k].error = std::current_exception();
        }
      }
    };
    const auto threads = std::min(cfg.client_parallelism, num_clients);
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    // Barrier passed: every client has finished this round.
    for (std::size_t k = 0; k < num_clients; ++k) {
      if (!outcomes[k].error) continue;
      try {
        std::rethrow_exception(outcomes[k].error);
      } catch (const std::exception& e) {
        throw TrainingDiverged("client " + std::to_string(k) + ", round " +
                               std::to_string(round) + ": " + e.what());
      }
    }

    if (cfg.train_id) {
      std::vector<std::span<const double>> views;
      for (const auto& o : outcomes) views.push_back(o.id_params.values());
      const auto merged = aggregate(views, weights);
      auto dst = global.id_params.values();
      if (merged.size() != dst.size()) throw ShapeError("aggregated id parameters changed shape");
      std::copy(merged.begin(), merged.end(), dst.begin());
    }
    if (cfg.train_text) {
      std::vector<std::span<const double>> views;
      for (const auto& o : outcomes) views.push_back(o.text_params.values());
      const auto merged = aggregate(views, weights);
      auto dst = global.text_params.mutable_values();
      if (merged.size() != dst.size()) {
        throw ShapeError("aggregated text parameters changed shape");
      }
      std::copy(merged.begin(), merged.end(), dst.begin());
    }
    global.round = round + 1;
    for (const auto& o : outcomes) result.log.push_back(o.metrics);
    if (cfg.on_round_end) cfg.on_round_end(global);
  }
  return result;
}

}  // namespace fedrec
