#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrec/chat_client.hpp"
#include "fedrec/core_data.hpp"
#include "fedrec/fuzzy_match.hpp"
#include "fedrec/hybrid_rank.hpp"
#include "fedrec/prompt.hpp"

namespace fedrec {

enum class RerankSource { kReranked, kStage1Fallback, kSkipped };

std::string to_string(RerankSource source);

struct RerankOutcome {
  std::string user_id;
  RerankSource source = RerankSource::kSkipped;
  std::vector<ItemIndex> ranked_items;
  std::optional<std::string> raw_response;
  std::optional<std::string> error;
};

struct RerankConfig {
  double threshold = kDefaultMatchThreshold;
  PromptProfile profile;
  CallLimits limits;
};

// Parsed prefix followed by the unparsed stage-1 items in stage-1 order.
std::vector<ItemIndex> complete_permutation(std::span<const ItemIndex> parsed,
                                            const CandidateSet& stage1);

// Deployment re-rank: prompt, call, match. Falls back to the stage-1 order
// when nothing in the response matches or the call fails.
RerankOutcome rerank_candidates(std::span<const ItemIndex> history,
                                const CandidateSet& stage1, const Catalog& catalog,
                                ChatClient& client, const RerankConfig& cfg);

nlohmann::json to_json(const RerankOutcome& outcome, const Catalog& catalog);

}  // namespace fedrec
