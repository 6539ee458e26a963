#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fedrec {

// Position of an item inside a Catalog. Catalog positions follow ascending
// item_id order, so comparing indices is comparing ids lexically.
using ItemIndex = std::uint32_t;

inline constexpr std::size_t kDefaultMaxLen = 50;
inline constexpr std::size_t kCoreThreshold = 5;

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

struct ItemMeta {
  std::string item_id;
  std::string title;
  std::vector<std::string> attributes;

  bool operator==(const ItemMeta&) const = default;
};

// The item scope. Immutable once built.
class Catalog {
 public:
  Catalog() = default;
  // Throws IntegrityError on duplicate ids, empty ids or empty titles.
  explicit Catalog(std::vector<ItemMeta> items);

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  const ItemMeta& at(ItemIndex index) const;
  const ItemMeta& at(std::string_view item_id) const;
  std::optional<ItemIndex> find(std::string_view item_id) const;
  // Throws LookupError for ids outside the scope.
  ItemIndex index_of(std::string_view item_id) const;
  bool contains(std::string_view item_id) const {
    return find(item_id).has_value();
  }

  std::span<const ItemMeta> items() const noexcept { return items_; }

  // Sub-catalog holding only the items some interaction references.
  Catalog restricted_to(std::span<const Interaction> interactions) const;

 private:
  std::vector<ItemMeta> items_;
  std::map<std::string, ItemIndex, std::less<>> index_;
};

// One user's chronological history and the held-out next item.
struct UserSequence {
  std::string user_id;
  std::vector<ItemIndex> history;
  ItemIndex target = 0;

  bool operator==(const UserSequence&) const = default;
};

struct FederatedSplit {
  std::vector<std::vector<UserSequence>> clients;
  std::vector<UserSequence> test_users;
  std::uint64_t seed = 0;
};

enum class SplitMode { kUniformRandom, kItemDisjointHeterogeneous };

struct SplitConfig {
  std::size_t num_clients = 5;
  std::size_t users_per_client = 1000;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::kUniformRandom;
};

struct Dataset {
  std::vector<Interaction> interactions;
  Catalog catalog;
};

// TSV with header `user_id\titem_id\ttimestamp`.
std::vector<Interaction> parse_interactions(std::istream& in);
// JSON lines: {"item_id": ..., "title": ..., "attributes": [...]}.
std::vector<ItemMeta> parse_item_metadata(std::istream& in);

// Reads both files; the catalog is restricted to referenced items.
Dataset load_interactions(const std::filesystem::path& interactions_path,
                          const std::filesystem::path& metadata_path);
Dataset make_dataset(std::vector<Interaction> interactions,
                     std::span<const ItemMeta> metadata);

// Largest sub-table in which every user and every item has at least
// `threshold` interactions. Input order is preserved.
std::vector<Interaction> five_core_filter(
    std::span<const Interaction> interactions,
    std::size_t threshold = kCoreThreshold);

struct SequenceBuild {
  std::vector<UserSequence> sequences;  // ordered by user_id
  std::size_t skipped_users = 0;        // users with < 2 interactions
};

SequenceBuild build_sequences(std::span<const Interaction> interactions,
                              const Catalog& catalog,
                              std::size_t max_len = kDefaultMaxLen);

FederatedSplit partition_federated(std::vector<UserSequence> sequences,
                                   const SplitConfig& config);

// Union of all items a set of sequences touches (history and targets),
// sorted ascending.
std::vector<ItemIndex> local_item_scope(std::span<const UserSequence> data);

nlohmann::json split_manifest(const FederatedSplit& split);
void write_split_manifest(const FederatedSplit& split,
                          const std::filesystem::path& path);

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(std::string_view name);

}  // namespace fedrec
