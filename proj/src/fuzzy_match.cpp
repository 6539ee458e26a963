#include "fedrec/fuzzy_match.hpp"

#include <algorithm>
#include <cctype>

#include "fedrec/errors.hpp"

namespace fedrec {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string normalize_title(std::string_view title) {
  std::string s;
  s.reserve(title.size());
  for (const char ch : title) {
    const auto c = static_cast<unsigned char>(ch);
    s += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  }
  // Trailing "(1994)".
  auto end = s.find_last_not_of(" \t");
  if (end != std::string::npos && end >= 5 && s[end] == ')' && s[end - 5] == '(' &&
      std::all_of(s.begin() + static_cast<std::ptrdiff_t>(end) - 4,
                  s.begin() + static_cast<std::ptrdiff_t>(end),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    s.erase(end - 5);
  }
  std::string out;
  bool pending_space = false;
  for (const char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += ch;
    } else {
      pending_space = true;
    }
  }
  for (const std::string_view article : {"the ", "a ", "an "}) {
    if (out.size() > article.size() && out.compare(0, article.size(), article) == 0) {
      out.erase(0, article.size());
      break;
    }
  }
  return out;
}

double title_similarity(std::string_view a, std::string_view b) {
  const auto na = normalize_title(a);
  const auto nb = normalize_title(b);
  if (na.empty() || nb.empty()) return 0.0;
  const auto longest = std::max(na.size(), nb.size());
  return 1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(longest);
}

std::string_view strip_enumeration(std::string_view line) {
  const auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  line = trim(line);
  std::size_t digits = 0;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
    ++digits;
  }
  if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
    return trim(line.substr(digits + 1));
  }
  if (!line.empty() && (line.front() == '-' || line.front() == '*')) {
    return trim(line.substr(1));
  }
  return line;
}

std::vector<ItemIndex> parse_and_match(std::string_view raw,
                                       const CandidateSet& candidates,
                                       const Catalog& catalog, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("match threshold must lie in (0, 1]");
  }
  if (candidates.items.empty()) throw PreconditionError("parse_and_match: no candidates");
  std::vector<std::string> titles;
  for (const auto item : candidates.items) {
    titles.push_back(normalize_title(catalog.at(item).title));
  }
  std::vector<ItemIndex> out;
  std::vector<char> used(candidates.items.size(), 0);
  while (!raw.empty()) {
    const auto eol = raw.find('\n');
    const auto line = normalize_title(strip_enumeration(raw.substr(0, eol)));
    raw = eol == std::string_view::npos ? std::string_view{} : raw.substr(eol + 1);
    if (line.empty()) continue;
    double best = -1.0;
    std::size_t best_pos = 0;
    for (std::size_t c = 0; c < titles.size(); ++c) {
      if (titles[c].empty()) continue;
      const auto longest = std::max(line.size(), titles[c].size());
      const double sim = 1.0 - static_cast<double>(levenshtein(line, titles[c])) /
                                   static_cast<double>(longest);
      if (sim > best) {
        best = sim;
        best_pos = c;
      }
    }
    if (best >= threshold && !used[best_pos]) {
      used[best_pos] = 1;
      out.push_back(candidates.items[best_pos]);
    }
  }
  return out;
}

}  // namespace fedrec
