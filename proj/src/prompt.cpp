#include "fedrec/prompt.hpp"

#include <cctype>

#include "fedrec/errors.hpp"
#include "fedrec/text_retriever.hpp"

namespace fedrec {

namespace {

constexpr std::string_view kHistoryHeader =
    "I've browsed the following items in the past in order:\n";
constexpr std::string_view kPoolHeader = "There is also candidate pool:\n";

}  // namespace

PromptProfile PromptProfile::movies() {
  PromptProfile p;
  p.role = "movie fan and movie reviewer";
  p.role_description = "recommending movies for people";
  p.noun = "movie";
  p.plural = "movies";
  p.action = "watch";
  p.history_kind = "watching";
  return p;
}

std::string task_instruction(const PromptProfile& p) {
  return "Please rank these " + p.plural +
         " by measuring the possibilities that I would like to " + p.action +
         " next most, according to my " + p.history_kind +
         " history. Please think step by step.\n"
         "Please show me your ranking results with order numbers. Split your output "
         "with line break. You MUST rank the given candidate " +
         p.plural + ". You can not generate " + p.plural +
         " that are not in the given candidate list.";
}

PromptSpec build_prompt_spec(std::span<const ItemIndex> history,
                             const CandidateSet& candidates, const Catalog& catalog,
                             const PromptProfile& profile) {
  if (candidates.items.empty()) throw PreconditionError("build_prompt: no candidates");
  if (history.empty()) throw PreconditionError("build_prompt: empty history");
  PromptSpec spec;
  spec.role = profile.role;
  spec.role_description = profile.role_description;
  std::size_t first = 0;
  if (profile.history_last_n && *profile.history_last_n < history.size()) {
    first = history.size() - *profile.history_last_n;
  }
  for (std::size_t i = first; i < history.size(); ++i) {
    spec.history_lines.push_back(
        describe_item(catalog.at(history[i]), profile.include_attributes, profile.noun));
  }
  for (std::size_t i = 0; i < candidates.items.size(); ++i) {
    spec.candidate_lines.push_back(std::to_string(i + 1) + ". " +
                                   catalog.at(candidates.items[i]).title);
  }
  spec.task_instruction = task_instruction(profile);
  return spec;
}

ChatMessagePair render_prompt(const PromptSpec& spec) {
  ChatMessagePair msg;
  msg.system = "You are a helpful " + spec.role + ", " + spec.role_description + ".";
  msg.user = std::string(kHistoryHeader);
  for (std::size_t i = 0; i < spec.history_lines.size(); ++i) {
    msg.user += spec.history_lines[i];
    msg.user += i + 1 < spec.history_lines.size() ? ";\n" : ".\n";
  }
  msg.user += kPoolHeader;
  for (const auto& line : spec.candidate_lines) {
    msg.user += line;
    msg.user += '\n';
  }
  msg.user += spec.task_instruction;
  return msg;
}

ChatMessagePair build_prompt(std::span<const ItemIndex> history,
                             const CandidateSet& candidates, const Catalog& catalog,
                             const PromptProfile& profile) {
  return render_prompt(build_prompt_spec(history, candidates, catalog, profile));
}

std::vector<std::string> extract_candidate_titles(std::string_view user_message) {
  std::vector<std::string> titles;
  const auto pool = user_message.find(kPoolHeader);
  if (pool == std::string_view::npos) return titles;
  auto rest = user_message.substr(pool + kPoolHeader.size());
  while (!rest.empty()) {
    const auto eol = rest.find('\n');
    const auto line = rest.substr(0, eol);
    const auto expected = std::to_string(titles.size() + 1) + ". ";
    if (line.substr(0, expected.size()) != expected) break;
    titles.emplace_back(line.substr(expected.size()));
    if (eol == std::string_view::npos) break;
    rest.remove_prefix(eol + 1);
  }
  return titles;
}

}  // namespace fedrec
