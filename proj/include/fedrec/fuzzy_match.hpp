#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/core_data.hpp"
#include "fedrec/hybrid_rank.hpp"

namespace fedrec {

inline constexpr double kDefaultMatchThreshold = 0.8;

// Byte-level edit distance (insert, delete, substitute; unit costs).
std::size_t levenshtein(std::string_view a, std::string_view b);

// Lowercase, drop a trailing "(yyyy)", turn punctuation into spaces, collapse
// whitespace, drop a leading "the"/"a"/"an".
std::string normalize_title(std::string_view title);

// 1 - levenshtein / max length over normalized strings; 0 when either side
// normalizes to empty.
double title_similarity(std::string_view a, std::string_view b);

// Removes a leading "1.", "2)", "-" or "*" marker and surrounding spaces.
std::string_view strip_enumeration(std::string_view line);

// Maps free-text model output onto candidate items. Line order is kept;
// each line resolves to its most similar candidate title when that
// similarity reaches `threshold` and the item was not already matched.
std::vector<ItemIndex> parse_and_match(std::string_view raw,
                                       const CandidateSet& candidates,
                                       const Catalog& catalog,
                                       double threshold = kDefaultMatchThreshold);

}  // namespace fedrec
