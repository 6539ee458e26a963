#pragma once

#include <cstddef>
#include <cstdint>

#include "fedrec/core_data.hpp"

namespace fedrec {

// Generator for the cold-start scenario: clients own disjoint item ids, all
// items draw labels from one shared attribute vocabulary, and test users
// interact only with items no client has seen.
struct SynthConfig {
  std::size_t num_clients = 5;
  std::size_t items_per_client = 60;
  std::size_t users_per_client = 200;
  std::size_t num_attributes = 12;
  std::size_t num_test_users = 50;
  std::size_t test_items = 60;
  std::size_t attributes_per_item = 2;
  std::size_t min_history = 4;
  std::size_t max_history = 10;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  Catalog catalog;
  FederatedSplit split;
};

SyntheticData synth_heterogeneous(const SynthConfig& config);

}  // namespace fedrec
