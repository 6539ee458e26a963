#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedrec/core_data.hpp"
#include "fedrec/optimizer.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

// Diagonal linear recurrent retriever over tied item embeddings:
//
//   h_0 = 0,  h_t = a * h_{t-1} + B e_{x_t},  logits_j = <h_l, e_j>
//
// with a = sigmoid(raw_decay) so every decay stays in (0, 1). All weights
// live in one flat vector [E | raw_decay | B] so they can be averaged as-is.
class IdRetrieverParams {
 public:
  IdRetrieverParams() = default;
  IdRetrieverParams(std::size_t num_items, std::size_t dim);

  std::size_t num_items() const noexcept { return num_items_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<double> embeddings() { return {values_.data(), num_items_ * dim_}; }
  std::span<const double> embeddings() const {
    return {values_.data(), num_items_ * dim_};
  }
  std::span<double> embedding(ItemIndex item) {
    return {values_.data() + std::size_t{item} * dim_, dim_};
  }
  std::span<const double> embedding(ItemIndex item) const {
    return {values_.data() + std::size_t{item} * dim_, dim_};
  }
  std::span<double> raw_decay() { return {values_.data() + decay_offset(), dim_}; }
  std::span<const double> raw_decay() const {
    return {values_.data() + decay_offset(), dim_};
  }
  // Row-major dim x dim.
  std::span<double> input_map() { return {values_.data() + map_offset(), dim_ * dim_}; }
  std::span<const double> input_map() const {
    return {values_.data() + map_offset(), dim_ * dim_};
  }

  std::vector<double> decay() const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t decay_offset() const noexcept { return num_items_ * dim_; }
  std::size_t map_offset() const noexcept { return num_items_ * dim_ + dim_; }

  bool operator==(const IdRetrieverParams&) const = default;

 private:
  std::size_t num_items_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// Gradients share the parameter layout.
using IdGradient = IdRetrieverParams;

// E, B ~ U(-1/sqrt(d), 1/sqrt(d)); raw decay 0 (a = 0.5).
IdRetrieverParams init_id_params(std::size_t num_items, std::size_t dim,
                                 std::uint64_t seed);

struct IdTrainConfig {
  double learning_rate = 1e-3;
  int local_epochs = 80;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::size_t dim = 32;
  std::size_t max_len = kDefaultMaxLen;
};

std::vector<double> id_forward(const IdRetrieverParams& params,
                               std::span<const ItemIndex> history,
                               std::size_t max_len = kDefaultMaxLen);

// Mean of -log softmax(logits)[target] over the batch.
double id_ce_loss(const IdRetrieverParams& params,
                  std::span<const UserSequence> batch);

// Gradient of id_ce_loss by backpropagation through time. The loss value is
// returned through `loss` when non-null.
IdGradient id_ce_gradient(const IdRetrieverParams& params,
                          std::span<const UserSequence> batch,
                          double* loss = nullptr);

struct LocalTrainStats {
  double mean_loss = 0.0;  // mean batch loss over the final epoch
  std::size_t steps = 0;
};

// Minibatch descent on id_ce_loss. Throws TrainingDiverged on a non-finite
// loss.
IdRetrieverParams id_train_local(IdRetrieverParams params,
                                 std::span<const UserSequence> client_data,
                                 const IdTrainConfig& cfg,
                                 LocalTrainStats* stats = nullptr);

// Shuffled minibatch partition used by both local trainers.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                   std::size_t batch_size,
                                                   Rng& rng);

}  // namespace fedrec
