#include "fedrec/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fedrec/errors.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

Catalog::Catalog(std::vector<ItemMeta> items) : items_(std::move(items)) {
  std::sort(items_.begin(), items_.end(),
            [](const ItemMeta& a, const ItemMeta& b) {
              return a.item_id < b.item_id;
            });
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    if (item.item_id.empty()) throw IntegrityError("item with empty item_id");
    if (item.title.empty()) {
      throw IntegrityError("item '" + item.item_id + "' has an empty title");
    }
    if (!index_.emplace(item.item_id, static_cast<ItemIndex>(i)).second) {
      throw IntegrityError("duplicate item_id '" + item.item_id + "'");
    }
  }
}

const ItemMeta& Catalog::at(ItemIndex index) const {
  if (index >= items_.size()) {
    throw LookupError("item index " + std::to_string(index) +
                      " outside catalog of " + std::to_string(items_.size()));
  }
  return items_[index];
}

const ItemMeta& Catalog::at(std::string_view item_id) const {
  return items_[index_of(item_id)];
}

std::optional<ItemIndex> Catalog::find(std::string_view item_id) const {
  const auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ItemIndex Catalog::index_of(std::string_view item_id) const {
  if (auto idx = find(item_id)) return *idx;
  throw LookupError("unknown item_id '" + std::string(item_id) + "'");
}

Catalog Catalog::restricted_to(std::span<const Interaction> interactions) const {
  std::set<std::string_view> referenced;
  for (const auto& row : interactions) referenced.insert(row.item_id);
  std::vector<ItemMeta> kept;
  kept.reserve(referenced.size());
  for (const auto id : referenced) kept.push_back(at(id));
  return Catalog(std::move(kept));
}

std::vector<Interaction> parse_interactions(std::istream& in) {
  std::vector<Interaction> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line_no == 1) {
      if (line.empty()) continue;
      if (line != "user_id\titem_id\ttimestamp") {
        throw ParseError(line_no,
                         "expected header 'user_id<TAB>item_id<TAB>timestamp'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError(line_no, "expected 3 tab-separated columns, found " +
                                    std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[1].empty()) {
      throw ParseError(line_no, "empty user_id or item_id");
    }
    std::int64_t ts = 0;
    const auto [ptr, ec] =
        std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), ts);
    if (ec != std::errc{} || ptr != cols[2].data() + cols[2].size()) {
      throw ParseError(line_no, "timestamp '" + std::string(cols[2]) +
                                    "' is not an integer");
    }
    if (ts < 0) throw ParseError(line_no, "negative timestamp");
    out.push_back({std::string(cols[0]), std::string(cols[1]), ts});
  }
  return out;
}

std::vector<ItemMeta> parse_item_metadata(std::istream& in) {
  std::vector<ItemMeta> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      ItemMeta meta;
      meta.item_id = obj.at("item_id").get<std::string>();
      meta.title = obj.at("title").get<std::string>();
      if (obj.contains("attributes")) {
        meta.attributes = obj.at("attributes").get<std::vector<std::string>>();
      }
      out.push_back(std::move(meta));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

Dataset make_dataset(std::vector<Interaction> interactions,
                     std::span<const ItemMeta> metadata) {
  std::map<std::string_view, const ItemMeta*> by_id;
  for (const auto& meta : metadata) by_id.emplace(meta.item_id, &meta);
  std::map<std::string_view, const ItemMeta*> used;
  for (const auto& row : interactions) {
    const auto it = by_id.find(row.item_id);
    if (it == by_id.end()) {
      throw IntegrityError("item '" + row.item_id +
                           "' is referenced but has no metadata");
    }
    used.emplace(it->first, it->second);
  }
  std::vector<ItemMeta> items;
  items.reserve(used.size());
  for (const auto& [id, meta] : used) items.push_back(*meta);
  return {std::move(interactions), Catalog(std::move(items))};
}

Dataset load_interactions(const std::filesystem::path& interactions_path,
                          const std::filesystem::path& metadata_path) {
  std::ifstream tsv(interactions_path);
  if (!tsv) {
    throw ValidationError("cannot open " + interactions_path.string());
  }
  std::ifstream jsonl(metadata_path);
  if (!jsonl) throw ValidationError("cannot open " + metadata_path.string());
  auto interactions = parse_interactions(tsv);
  const auto metadata = parse_item_metadata(jsonl);
  return make_dataset(std::move(interactions), metadata);
}

std::vector<Interaction> five_core_filter(
    std::span<const Interaction> interactions, std::size_t threshold) {
  // Integer ids for users and items, adjacency as row lists.
  std::unordered_map<std::string_view, std::size_t> user_ids;
  std::unordered_map<std::string_view, std::size_t> item_ids;
  std::vector<std::size_t> row_user(interactions.size());
  std::vector<std::size_t> row_item(interactions.size());
  for (std::size_t r = 0; r < interactions.size(); ++r) {
    row_user[r] =
        user_ids.emplace(interactions[r].user_id, user_ids.size()).first->second;
    row_item[r] =
        item_ids.emplace(interactions[r].item_id, item_ids.size()).first->second;
  }
  std::vector<std::vector<std::size_t>> user_rows(user_ids.size());
  std::vector<std::vector<std::size_t>> item_rows(item_ids.size());
  for (std::size_t r = 0; r < interactions.size(); ++r) {
    user_rows[row_user[r]].push_back(r);
    item_rows[row_item[r]].push_back(r);
  }
  std::vector<std::size_t> user_count(user_rows.size());
  std::vector<std::size_t> item_count(item_rows.size());
  for (std::size_t u = 0; u < user_rows.size(); ++u) user_count[u] = user_rows[u].size();
  for (std::size_t i = 0; i < item_rows.size(); ++i) item_count[i] = item_rows[i].size();

  std::vector<char> alive(interactions.size(), 1);
  std::vector<char> user_gone(user_rows.size(), 0);
  std::vector<char> item_gone(item_rows.size(), 0);
  // Worklist of (is_item, id) entities that fell below the threshold.
  std::vector<std::pair<bool, std::size_t>> work;
  for (std::size_t u = 0; u < user_count.size(); ++u) {
    if (user_count[u] < threshold) work.emplace_back(false, u);
  }
  for (std::size_t i = 0; i < item_count.size(); ++i) {
    if (item_count[i] < threshold) work.emplace_back(true, i);
  }
  while (!work.empty()) {
    const auto [is_item, id] = work.back();
    work.pop_back();
    auto& gone = is_item ? item_gone[id] : user_gone[id];
    if (gone) continue;
    gone = 1;
    for (const auto r : is_item ? item_rows[id] : user_rows[id]) {
      if (!alive[r]) continue;
      alive[r] = 0;
      if (is_item) {
        const auto u = row_user[r];
        if (--user_count[u] < threshold && !user_gone[u]) work.emplace_back(false, u);
      } else {
        const auto i = row_item[r];
        if (--item_count[i] < threshold && !item_gone[i]) work.emplace_back(true, i);
      }
    }
  }
  std::vector<Interaction> out;
  for (std::size_t r = 0; r < interactions.size(); ++r) {
    if (alive[r]) out.push_back(interactions[r]);
  }
  return out;
}

SequenceBuild build_sequences(std::span<const Interaction> interactions,
                              const Catalog& catalog, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  std::map<std::string_view, std::vector<std::size_t>> rows_by_user;
  for (std::size_t r = 0; r < interactions.size(); ++r) {
    rows_by_user[interactions[r].user_id].push_back(r);
  }
  SequenceBuild out;
  for (auto& [user, rows] : rows_by_user) {
    if (rows.size() < 2) {
      ++out.skipped_users;
      continue;
    }
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
    UserSequence seq;
    seq.user_id = std::string(user);
    seq.target = catalog.index_of(interactions[rows.back()].item_id);
    const std::size_t hist_len = rows.size() - 1;
    const std::size_t first = hist_len > max_len ? hist_len - max_len : 0;
    for (std::size_t k = first; k < hist_len; ++k) {
      seq.history.push_back(catalog.index_of(interactions[rows[k]].item_id));
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

namespace {

ItemIndex dominant_item(const UserSequence& seq) {
  std::map<ItemIndex, std::size_t> counts;
  for (const auto item : seq.history) ++counts[item];
  ItemIndex best = seq.target;
  std::size_t best_count = 0;
  for (const auto& [item, count] : counts) {
    if (count > best_count) {
      best = item;
      best_count = count;
    }
  }
  return best;
}

void sort_by_user(std::vector<UserSequence>& seqs) {
  std::sort(seqs.begin(), seqs.end(),
            [](const UserSequence& a, const UserSequence& b) {
              return a.user_id < b.user_id;
            });
}

}  // namespace

FederatedSplit partition_federated(std::vector<UserSequence> sequences,
                                   const SplitConfig& config) {
  if (config.num_clients == 0) throw ConfigError("num_clients must be >= 1");
  if (config.users_per_client == 0) {
    throw ConfigError("users_per_client must be >= 1");
  }
  const std::size_t needed = config.num_clients * config.users_per_client;
  if (needed > sequences.size()) {
    throw ConfigError("split needs " + std::to_string(needed) +
                      " users but only " + std::to_string(sequences.size()) +
                      " are available");
  }
  sort_by_user(sequences);
  for (std::size_t i = 1; i < sequences.size(); ++i) {
    if (sequences[i].user_id == sequences[i - 1].user_id) {
      throw IntegrityError("duplicate user_id '" + sequences[i].user_id + "'");
    }
  }

  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);
  rng.shuffle(order);

  FederatedSplit split;
  split.seed = config.seed;
  split.clients.resize(config.num_clients);
  std::vector<char> taken(sequences.size(), 0);

  if (config.mode == SplitMode::kItemDisjointHeterogeneous) {
    // Items hash into one bucket per client; a user prefers the client that
    // owns the bucket of their most frequent history item.
    for (const auto idx : order) {
      const auto bucket = static_cast<std::size_t>(
          splitmix64(dominant_item(sequences[idx])) % config.num_clients);
      auto& client = split.clients[bucket];
      if (client.size() < config.users_per_client) {
        client.push_back(sequences[idx]);
        taken[idx] = 1;
      }
    }
  }
  std::size_t cursor = 0;
  for (auto& client : split.clients) {
    while (client.size() < config.users_per_client) {
      while (taken[order[cursor]]) ++cursor;
      client.push_back(sequences[order[cursor]]);
      taken[order[cursor]] = 1;
    }
    sort_by_user(client);
  }
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (!taken[i]) split.test_users.push_back(std::move(sequences[i]));
  }
  return split;
}

std::vector<ItemIndex> local_item_scope(std::span<const UserSequence> data) {
  std::set<ItemIndex> items;
  for (const auto& seq : data) {
    items.insert(seq.history.begin(), seq.history.end());
    items.insert(seq.target);
  }
  return {items.begin(), items.end()};
}

nlohmann::json split_manifest(const FederatedSplit& split) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& client : split.clients) {
    nlohmann::json users = nlohmann::json::array();
    for (const auto& seq : client) users.push_back(seq.user_id);
    clients.push_back(std::move(users));
  }
  nlohmann::json test = nlohmann::json::array();
  for (const auto& seq : split.test_users) test.push_back(seq.user_id);
  return {{"seed", split.seed}, {"clients", clients}, {"test_users", test}};
}

void write_split_manifest(const FederatedSplit& split,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << split_manifest(split).dump(2) << '\n';
}

std::string to_string(SplitMode mode) {
  return mode == SplitMode::kUniformRandom ? "uniform-random"
                                           : "item-disjoint-heterogeneous";
}

SplitMode split_mode_from_string(std::string_view name) {
  if (name == "uniform-random") return SplitMode::kUniformRandom;
  if (name == "item-disjoint-heterogeneous") {
    return SplitMode::kItemDisjointHeterogeneous;
  }
  throw ConfigError("unknown split mode '" + std::string(name) + "'");
}

}  // namespace fedrec
