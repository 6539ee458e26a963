#include "fedrec/rerank_policy.hpp"

#include <algorithm>

#include "fedrec/errors.hpp"

namespace fedrec::eval_protocol {

RerankOutcome apply_rerank_policy(const UserSequence& user, const CandidateSet& stage1,
                                  const Catalog& catalog, ChatClient& client,
                                  const RerankConfig& cfg) {
  RerankOutcome outcome;
  outcome.user_id = user.user_id;
  outcome.ranked_items = stage1.items;
  if (!stage1.contains(user.target)) {
    outcome.source = RerankSource::kSkipped;
    return outcome;
  }
  outcome.source = RerankSource::kStage1Fallback;
  const auto prompt = build_prompt(user.history, stage1, catalog, cfg.profile);
  try {
    outcome.raw_response = chat_complete(client, prompt, cfg.limits);
  } catch (const Error& e) {
    outcome.error = e.what();
    return outcome;
  }
  const auto parsed = parse_and_match(*outcome.raw_response, stage1, catalog, cfg.threshold);
  if (std::find(parsed.begin(), parsed.end(), user.target) != parsed.end()) {
    outcome.source = RerankSource::kReranked;
    outcome.ranked_items = complete_permutation(parsed, stage1);
  }
  return outcome;
}

}  // namespace fedrec::eval_protocol
