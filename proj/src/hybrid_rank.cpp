#include "fedrec/hybrid_rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedrec/errors.hpp"

namespace fedrec {

void HybridConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (n_candidates == 0) throw ConfigError("n_candidates must be >= 1");
}

bool CandidateSet::contains(ItemIndex item) const {
  return std::find(items.begin(), items.end(), item) != items.end();
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("softmax of an empty vector");
  double m = logits[0];
  for (const double v : logits) {
    if (!std::isfinite(v)) throw DomainError("softmax input is not finite");
    m = std::max(m, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<double> hybrid_scores(std::span<const double> id_logits,
                                  std::span<const double> text_logits, double lambda) {
  if (id_logits.size() != text_logits.size()) {
    throw ShapeError("hybrid_scores: id vector has " + std::to_string(id_logits.size()) +
                     " entries, text vector has " + std::to_string(text_logits.size()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda outside [0, 1]");
  const auto p_id = softmax(id_logits);
  const auto p_text = softmax(text_logits);
  std::vector<double> out(p_id.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = lambda * p_id[i] + (1.0 - lambda) * p_text[i];
  }
  return out;
}

CandidateSet retrieve_top_n(std::span<const double> scores, const HybridConfig& cfg,
                            std::span<const ItemIndex> history, std::string user_id) {
  cfg.validate();
  std::vector<ItemIndex> eligible;
  eligible.reserve(scores.size());
  const std::set<ItemIndex> masked =
      cfg.mask_history ? std::set<ItemIndex>(history.begin(), history.end())
                       : std::set<ItemIndex>{};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!masked.contains(static_cast<ItemIndex>(i))) {
      eligible.push_back(static_cast<ItemIndex>(i));
    }
  }
  const auto keep = std::min(cfg.n_candidates, eligible.size());
  const auto cmp = [&](ItemIndex a, ItemIndex b) { return ranks_before(scores, a, b); };
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(keep),
                    eligible.end(), cmp);
  CandidateSet out;
  out.user_id = std::move(user_id);
  out.truncated = eligible.size() > keep;
  out.items.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(keep));
  for (const auto item : out.items) out.scores.push_back(scores[item]);
  return out;
}

std::size_t full_rank(std::span<const double> scores, ItemIndex item,
                      std::span<const ItemIndex> mask) {
  if (item >= scores.size()) throw LookupError("full_rank: item outside score vector");
  const std::set<ItemIndex> masked(mask.begin(), mask.end());
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const auto other = static_cast<ItemIndex>(j);
    if (other == item || masked.contains(other)) continue;
    if (ranks_before(scores, other, item)) ++ahead;
  }
  return ahead + 1;
}

std::vector<ItemIndex> full_ranking(std::span<const double> scores) {
  std::vector<ItemIndex> order(scores.size());
  std::iota(order.begin(), order.end(), ItemIndex{0});
  std::sort(order.begin(), order.end(),
            [&](ItemIndex a, ItemIndex b) { return ranks_before(scores, a, b); });
  return order;
}

nlohmann::json to_json(const CandidateSet& set, const Catalog& catalog) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto item : set.items) items.push_back(catalog.at(item).item_id);
  return {{"user_id", set.user_id}, {"items", items}, {"scores", set.scores}};
}

CandidateSet candidate_set_from_json(const nlohmann::json& j, const Catalog& catalog) {
  CandidateSet set;
  try {
    set.user_id = j.at("user_id").get<std::string>();
    for (const auto& id : j.at("items")) {
      set.items.push_back(catalog.index_of(id.get<std::string>()));
    }
    if (j.contains("scores")) set.scores = j.at("scores").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad candidate set: " + std::string(e.what()));
  }
  if (!set.scores.empty() && set.scores.size() != set.items.size()) {
    throw ValidationError("candidate set for '" + set.user_id +
                          "' has mismatched items and scores");
  }
  return set;
}

}  // namespace fedrec
