#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/core_data.hpp"
#include "fedrec/hybrid_rank.hpp"

namespace fedrec {

// Domain wording for the re-rank prompt.
struct PromptProfile {
  std::string role = "shopping assistant";
  std::string role_description = "recommending products for customers";
  std::string noun = "item";       // history lines: "<title>, an item about ..."
  std::string plural = "items";    // "rank these items", "candidate items"
  std::string action = "interact with";
  std::string history_kind = "browsing";
  bool include_attributes = true;
  std::optional<std::size_t> history_last_n;

  static PromptProfile shopping() { return {}; }
  static PromptProfile movies();
};

struct PromptSpec {
  std::string role;
  std::string role_description;
  std::vector<std::string> history_lines;
  std::vector<std::string> candidate_lines;  // "1. <title>", "2. <title>", ...
  std::string task_instruction;
};

struct ChatMessagePair {
  std::string system;
  std::string user;
};

std::string task_instruction(const PromptProfile& profile);

PromptSpec build_prompt_spec(std::span<const ItemIndex> history,
                             const CandidateSet& candidates, const Catalog& catalog,
                             const PromptProfile& profile);
ChatMessagePair render_prompt(const PromptSpec& spec);

ChatMessagePair build_prompt(std::span<const ItemIndex> history,
                             const CandidateSet& candidates, const Catalog& catalog,
                             const PromptProfile& profile);

// Numbered candidate titles listed in a rendered user message, in order.
std::vector<std::string> extract_candidate_titles(std::string_view user_message);

}  // namespace fedrec
