#pragma once

#include "fedrec/rerank.hpp"

// Evaluation protocol only. Everything in this header reads the held-out
// ground truth and therefore must never sit on a serving path.
namespace fedrec::eval_protocol {

// Re-ranks only users whose ground truth made the stage-1 cut, and keeps a
// re-ranked list only when it still contains the ground truth:
//   target not in stage-1            -> kSkipped, stage-1 order
//   target matched in the response   -> kReranked, parsed order + remainder
//   otherwise (noise or call error)  -> kStage1Fallback, stage-1 order
RerankOutcome apply_rerank_policy(const UserSequence& user, const CandidateSet& stage1,
                                  const Catalog& catalog, ChatClient& client,
                                  const RerankConfig& cfg);

}  // namespace fedrec::eval_protocol
