#include "fedrec/id_retriever.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedrec/errors.hpp"

namespace fedrec {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (const double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void check_history(const IdRetrieverParams& params,
                   std::span<const ItemIndex> history, std::size_t max_len) {
  if (history.empty()) throw PreconditionError("id_forward: empty history");
  if (history.size() > max_len) {
    throw PreconditionError("id_forward: history length " +
                            std::to_string(history.size()) + " exceeds max_len " +
                            std::to_string(max_len));
  }
  for (const auto item : history) {
    if (item >= params.num_items()) {
      throw LookupError("id_forward: item index " + std::to_string(item) +
                        " outside item scope of " +
                        std::to_string(params.num_items()));
    }
  }
}

// Hidden states h_0..h_l, each of size d, stored contiguously.
std::vector<double> run_recurrence(const IdRetrieverParams& params,
                                   std::span<const ItemIndex> history,
                                   std::span<const double> decay) {
  const std::size_t d = params.dim();
  const auto map = params.input_map();
  std::vector<double> states((history.size() + 1) * d, 0.0);
  for (std::size_t t = 1; t <= history.size(); ++t) {
    const auto e = params.embedding(history[t - 1]);
    const double* prev = states.data() + (t - 1) * d;
    double* cur = states.data() + t * d;
    for (std::size_t r = 0; r < d; ++r) {
      double u = 0.0;
      for (std::size_t c = 0; c < d; ++c) u += map[r * d + c] * e[c];
      cur[r] = decay[r] * prev[r] + u;
    }
  }
  return states;
}

std::vector<double> logits_from_state(const IdRetrieverParams& params,
                                      std::span<const double> h) {
  const std::size_t d = params.dim();
  std::vector<double> logits(params.num_items());
  for (std::size_t j = 0; j < params.num_items(); ++j) {
    const auto e = params.embedding(static_cast<ItemIndex>(j));
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += h[c] * e[c];
    logits[j] = s;
  }
  return logits;
}

}  // namespace

IdRetrieverParams::IdRetrieverParams(std::size_t num_items, std::size_t dim)
    : num_items_(num_items),
      dim_(dim),
      values_(num_items * dim + dim + dim * dim, 0.0) {}

std::vector<double> IdRetrieverParams::decay() const {
  std::vector<double> a(dim_);
  const auto raw = raw_decay();
  for (std::size_t i = 0; i < dim_; ++i) a[i] = sigmoid(raw[i]);
  return a;
}

IdRetrieverParams init_id_params(std::size_t num_items, std::size_t dim,
                                 std::uint64_t seed) {
  if (num_items == 0 || dim == 0) {
    throw ConfigError("id retriever needs num_items >= 1 and dim >= 1");
  }
  IdRetrieverParams params(num_items, dim);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : params.embeddings()) v = rng.uniform(-bound, bound);
  for (auto& v : params.input_map()) v = rng.uniform(-bound, bound);
  return params;
}

std::vector<double> id_forward(const IdRetrieverParams& params,
                               std::span<const ItemIndex> history,
                               std::size_t max_len) {
  check_history(params, history, max_len);
  const auto states = run_recurrence(params, history, params.decay());
  const std::span<const double> last(states.data() + history.size() * params.dim(),
                                     params.dim());
  return logits_from_state(params, last);
}

double id_ce_loss(const IdRetrieverParams& params,
                  std::span<const UserSequence> batch) {
  if (batch.empty()) throw PreconditionError("id_ce_loss: empty batch");
  double total = 0.0;
  for (const auto& seq : batch) {
    const auto logits = id_forward(params, seq.history, seq.history.size());
    if (seq.target >= logits.size()) {
      throw LookupError("id_ce_loss: target outside item scope");
    }
    total += log_sum_exp(logits) - logits[seq.target];
  }
  return total / static_cast<double>(batch.size());
}

IdGradient id_ce_gradient(const IdRetrieverParams& params,
                          std::span<const UserSequence> batch, double* loss) {
  if (batch.empty()) throw PreconditionError("id_ce_gradient: empty batch");
  const std::size_t d = params.dim();
  const std::size_t n = params.num_items();
  const auto decay = params.decay();
  const auto map = params.input_map();
  const double scale = 1.0 / static_cast<double>(batch.size());

  IdGradient grad(n, d);
  auto g_map = grad.input_map();
  std::vector<double> g_decay(d, 0.0);
  double total = 0.0;

  std::vector<double> dh(d), g(d), de(d);
  for (const auto& seq : batch) {
    const auto& hist = seq.history;
    check_history(params, hist, hist.size());
    if (seq.target >= n) throw LookupError("id_ce_gradient: target outside item scope");
    const auto states = run_recurrence(params, hist, decay);
    const std::span<const double> h(states.data() + hist.size() * d, d);
    auto logits = logits_from_state(params, h);
    const double lse = log_sum_exp(logits);
    total += lse - logits[seq.target];

    // dL/dlogits = softmax - onehot(target), scaled for the batch mean.
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double dz = std::exp(logits[j] - lse);
      if (j == seq.target) dz -= 1.0;
      dz *= scale;
      const auto e = params.embedding(static_cast<ItemIndex>(j));
      auto ge = grad.embedding(static_cast<ItemIndex>(j));
      for (std::size_t c = 0; c < d; ++c) {
        ge[c] += dz * h[c];
        dh[c] += dz * e[c];
      }
    }

    // Backward through h_t = a * h_{t-1} + B e_t.
    g = dh;
    for (std::size_t t = hist.size(); t >= 1; --t) {
      const double* prev = states.data() + (t - 1) * d;
      const auto e = params.embedding(hist[t - 1]);
      std::fill(de.begin(), de.end(), 0.0);
      for (std::size_t r = 0; r < d; ++r) {
        g_decay[r] += g[r] * prev[r];
        for (std::size_t c = 0; c < d; ++c) {
          g_map[r * d + c] += g[r] * e[c];
          de[c] += map[r * d + c] * g[r];
        }
      }
      auto ge = grad.embedding(hist[t - 1]);
      for (std::size_t c = 0; c < d; ++c) ge[c] += de[c];
      for (std::size_t r = 0; r < d; ++r) g[r] *= decay[r];
    }
  }
  auto g_raw = grad.raw_decay();
  for (std::size_t r = 0; r < d; ++r) {
    g_raw[r] = g_decay[r] * decay[r] * (1.0 - decay[r]);
  }
  if (loss != nullptr) *loss = total * scale;
  return grad;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                   std::size_t batch_size,
                                                   Rng& rng) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const auto end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

IdRetrieverParams id_train_local(IdRetrieverParams params,
                                 std::span<const UserSequence> client_data,
                                 const IdTrainConfig& cfg,
                                 LocalTrainStats* stats) {
  if (client_data.empty()) throw PreconditionError("id_train_local: no data");
  if (!(cfg.learning_rate >= 0.0) || cfg.local_epochs < 1 || cfg.batch_size == 0) {
    throw ConfigError("id_train_local: invalid training config");
  }
  Rng rng(cfg.seed);
  AdamState adam(cfg.optimizer == OptimizerKind::kAdam ? params.values().size() : 0);
  LocalTrainStats local;
  std::vector<UserSequence> batch;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = make_batches(client_data.size(), cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      batch.clear();
      for (const auto idx : batches[b]) batch.push_back(client_data[idx]);
      double loss = 0.0;
      const auto grad = id_ce_gradient(params, batch, &loss);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("id retriever loss is not finite at epoch " +
                               std::to_string(epoch) + ", batch " +
                               std::to_string(b));
      }
      epoch_loss += loss;
      ++local.steps;
      if (cfg.learning_rate == 0.0) continue;
      auto values = params.values();
      const auto g = grad.values();
      if (cfg.optimizer == OptimizerKind::kAdam) {
        adam.begin_step();
        adam.update(values, 0, g, cfg.learning_rate);
      } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
          values[i] -= cfg.learning_rate * g[i];
        }
      }
    }
    local.mean_loss = epoch_loss / static_cast<double>(batches.size());
  }
  if (stats != nullptr) *stats = local;
  return params;
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

}  // namespace fedrec
