#include "fedrec/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <string>

#include "fedrec/errors.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

namespace {

constexpr std::array<const char*, 16> kGenres = {
    "drama",   "comedy",  "thriller", "horror",   "romance", "western",
    "fantasy", "mystery", "war",      "animation", "musical", "crime",
    "sports",  "history", "family",   "documentary"};

constexpr std::array<const char*, 20> kSyllables = {
    "ka", "lo", "mir", "zen", "tu", "vex", "ra", "qui", "dor", "pel",
    "sa", "nim", "bo", "ther", "gal", "wyn", "cor", "fi", "ul", "ash"};

std::string attribute_label(std::size_t a) {
  if (a < kGenres.size()) return kGenres[a];
  return "genre" + std::to_string(a);
}

std::string padded(std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return buf;
}

std::string make_name(Rng& rng) {
  std::string word;
  const auto syllables = 2 + rng.uniform_index(2);
  for (std::uint64_t s = 0; s < syllables; ++s) {
    word += kSyllables[rng.uniform_index(kSyllables.size())];
  }
  word[0] = static_cast<char>(word[0] - 'a' + 'A');
  return word;
}

struct Pool {
  std::vector<ItemMeta> items;
  // attribute -> positions in `items`
  std::vector<std::vector<std::size_t>> by_attribute;
};

Pool make_pool(const std::string& prefix, std::size_t count,
               const SynthConfig& cfg, Rng& rng, std::set<std::string>& names) {
  Pool pool;
  pool.by_attribute.resize(cfg.num_attributes);
  const auto per_item = std::min(cfg.attributes_per_item, cfg.num_attributes);
  for (std::size_t j = 0; j < count; ++j) {
    std::vector<std::size_t> attrs{j % cfg.num_attributes};
    while (attrs.size() < per_item) {
      const auto a = static_cast<std::size_t>(rng.uniform_index(cfg.num_attributes));
      if (std::find(attrs.begin(), attrs.end(), a) == attrs.end()) attrs.push_back(a);
    }
    std::string name;
    do {
      name = make_name(rng) + " " + make_name(rng);
    } while (!names.insert(name).second);

    ItemMeta meta;
    meta.item_id = prefix + padded(j, 4);
    for (const auto a : attrs) {
      meta.attributes.push_back(attribute_label(a));
      pool.by_attribute[a].push_back(pool.items.size());
    }
    meta.title = name;
    pool.items.push_back(std::move(meta));
  }
  return pool;
}

UserSequence make_user(std::string user_id, const Pool& pool,
                       const Catalog& catalog, const SynthConfig& cfg,
                       Rng& rng) {
  // Prefer a taste with at least two items so history and target differ.
  std::vector<std::size_t> tastes;
  for (std::size_t a = 0; a < pool.by_attribute.size(); ++a) {
    if (pool.by_attribute[a].size() >= 2) tastes.push_back(a);
  }
  if (tastes.empty()) {
    for (std::size_t a = 0; a < pool.by_attribute.size(); ++a) {
      if (!pool.by_attribute[a].empty()) tastes.push_back(a);
    }
  }
  const auto& members = pool.by_attribute[tastes[rng.uniform_index(tastes.size())]];
  const auto target_pos = members[rng.uniform_index(members.size())];

  std::vector<std::size_t> others;
  for (const auto m : members) {
    if (m != target_pos) others.push_back(m);
  }
  if (others.empty()) others.push_back(target_pos);

  const auto span = cfg.max_history - cfg.min_history + 1;
  const auto length = cfg.min_history + rng.uniform_index(span);
  UserSequence seq;
  seq.user_id = std::move(user_id);
  if (length <= others.size()) {
    for (const auto k : rng.sample_without_replacement(others.size(), length)) {
      seq.history.push_back(catalog.index_of(pool.items[others[k]].item_id));
    }
  } else {
    for (std::size_t k = 0; k < length; ++k) {
      const auto pick = others[rng.uniform_index(others.size())];
      seq.history.push_back(catalog.index_of(pool.items[pick].item_id));
    }
  }
  seq.target = catalog.index_of(pool.items[target_pos].item_id);
  return seq;
}

}  // namespace

SyntheticData synth_heterogeneous(const SynthConfig& cfg) {
  if (cfg.num_clients == 0 || cfg.items_per_client == 0 ||
      cfg.users_per_client == 0 || cfg.num_attributes == 0 ||
      cfg.test_items == 0 || cfg.attributes_per_item == 0) {
    throw ConfigError("synthetic generator counts must all be >= 1");
  }
  if (cfg.min_history == 0 || cfg.max_history < cfg.min_history) {
    throw ConfigError("synthetic history length range is invalid");
  }
  Rng rng(cfg.seed);
  std::set<std::string> names;
  std::vector<Pool> client_pools;
  for (std::size_t k = 0; k < cfg.num_clients; ++k) {
    client_pools.push_back(
        make_pool("c" + std::to_string(k) + "-", cfg.items_per_client, cfg, rng, names));
  }
  const auto test_pool = make_pool("t-", cfg.test_items, cfg, rng, names);

  std::vector<ItemMeta> all;
  for (const auto& pool : client_pools) {
    all.insert(all.end(), pool.items.begin(), pool.items.end());
  }
  all.insert(all.end(), test_pool.items.begin(), test_pool.items.end());

  SyntheticData data{Catalog(std::move(all)), {}};
  data.split.seed = cfg.seed;
  for (std::size_t k = 0; k < cfg.num_clients; ++k) {
    std::vector<UserSequence> users;
    for (std::size_t u = 0; u < cfg.users_per_client; ++u) {
      users.push_back(make_user("u" + std::to_string(k) + "-" + padded(u, 5),
                                client_pools[k], data.catalog, cfg, rng));
    }
    data.split.clients.push_back(std::move(users));
  }
  for (std::size_t u = 0; u < cfg.num_test_users; ++u) {
    data.split.test_users.push_back(
        make_user("x-" + padded(u, 5), test_pool, data.catalog, cfg, rng));
  }
  return data;
}

}  // namespace fedrec
