#include "fedrec/rerank.hpp"

#include <algorithm>
#include <set>

#include "fedrec/errors.hpp"

namespace fedrec {

std::string to_string(RerankSource source) {
  switch (source) {
    case RerankSource::kReranked:
      return "reranked";
    case RerankSource::kStage1Fallback:
      return "stage1-fallback";
    case RerankSource::kSkipped:
      return "skipped";
  }
  return "unknown";
}

std::vector<ItemIndex> complete_permutation(std::span<const ItemIndex> parsed,
                                            const CandidateSet& stage1) {
  std::vector<ItemIndex> out;
  std::set<ItemIndex> seen;
  for (const auto item : parsed) {
    if (stage1.contains(item) && seen.insert(item).second) out.push_back(item);
  }
  for (const auto item : stage1.items) {
    if (seen.insert(item).second) out.push_back(item);
  }
  return out;
}

RerankOutcome rerank_candidates(std::span<const ItemIndex> history,
                                const CandidateSet& stage1, const Catalog& catalog,
                                ChatClient& client, const RerankConfig& cfg) {
  RerankOutcome outcome;
  outcome.user_id = stage1.user_id;
  outcome.source = RerankSource::kStage1Fallback;
  outcome.ranked_items = stage1.items;
  const auto prompt = build_prompt(history, stage1, catalog, cfg.profile);
  try {
    outcome.raw_response = chat_complete(client, prompt, cfg.limits);
  } catch (const Error& e) {
    outcome.error = e.what();
    return outcome;
  }
  const auto parsed = parse_and_match(*outcome.raw_response, stage1, catalog, cfg.threshold);
  if (!parsed.empty()) {
    outcome.source = RerankSource::kReranked;
    outcome.ranked_items = complete_permutation(parsed, stage1);
  }
  return outcome;
}

nlohmann::json to_json(const RerankOutcome& outcome, const Catalog& catalog) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto item : outcome.ranked_items) items.push_back(catalog.at(item).item_id);
  nlohmann::json j = {{"user_id", outcome.user_id},
                      {"source", to_string(outcome.source)},
                      {"items", items}};
  if (outcome.raw_response) j["raw_response"] = *outcome.raw_response;
  if (outcome.error) j["error"] = *outcome.error;
  return j;
}

}  // namespace fedrec
