#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/core_data.hpp"

namespace fedrec {

inline constexpr std::size_t kDefaultCandidates = 20;

struct HybridConfig {
  double lambda = 0.5;  // weight of the ID retriever
  std::size_t n_candidates = kDefaultCandidates;
  bool mask_history = false;

  void validate() const;
};

// Stage-1 output: top-N items by hybrid probability.
struct CandidateSet {
  std::string user_id;
  std::vector<ItemIndex> items;
  std::vector<double> scores;
  bool truncated = false;  // more eligible items existed than were kept

  bool contains(ItemIndex item) const;
};

// Max-shifted softmax. Throws DomainError on empty or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

// lambda * softmax(id) + (1 - lambda) * softmax(text), elementwise.
std::vector<double> hybrid_scores(std::span<const double> id_logits,
                                  std::span<const double> text_logits, double lambda);

// Ranking order: score descending, then item index (= item_id) ascending.
inline bool ranks_before(std::span<const double> scores, ItemIndex a, ItemIndex b) {
  return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
}

CandidateSet retrieve_top_n(std::span<const double> scores, const HybridConfig& cfg,
                            std::span<const ItemIndex> history,
                            std::string user_id = {});

// 1-based position of `item` in the full ranking of `scores` (history items
// excluded first when `mask` is non-empty).
std::size_t full_rank(std::span<const double> scores, ItemIndex item,
                      std::span<const ItemIndex> mask = {});

// Every item in ranking order.
std::vector<ItemIndex> full_ranking(std::span<const double> scores);

nlohmann::json to_json(const CandidateSet& set, const Catalog& catalog);
CandidateSet candidate_set_from_json(const nlohmann::json& j, const Catalog& catalog);

}  // namespace fedrec
