#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/core_data.hpp"
#include "fedrec/id_retriever.hpp"
#include "fedrec/optimizer.hpp"

namespace fedrec {

inline constexpr std::size_t kDefaultVocabSize = std::size_t{1} << 15;
inline constexpr std::size_t kDefaultTextDim = 64;
inline constexpr double kDefaultTemperature = 0.05;

// How items are turned into retriever text.
struct TemplateOptions {
  bool include_attributes = true;
  std::optional<std::size_t> last_n;  // query only: most recent items kept
  std::string noun = "item";          // "<title>, an item about ..."
};

struct RenderedQuery {
  std::string text;  // starts with "query: "
};

struct RenderedPassage {
  std::string text;  // starts with "passage: "
};

// "<title>, an <noun> about <attr1>, <attr2>"; the clause is dropped when
// attributes are off or empty.
std::string describe_item(const ItemMeta& item, bool include_attributes,
                          std::string_view noun = "item");

RenderedQuery render_query(std::span<const ItemIndex> history,
                           const Catalog& catalog, const TemplateOptions& opts);
RenderedPassage render_passage(ItemIndex item, const Catalog& catalog,
                               const TemplateOptions& opts);

// Lowercased alphanumeric runs (bytes >= 0x80 count as word characters).
std::vector<std::string> split_tokens(std::string_view text);
// Token buckets fnv1a64(token) mod vocab_size, sorted ascending.
std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t vocab_size);

// Hashed bag-of-tokens encoder: mean token embedding, projected by W, then
// L2-normalized. Values are laid out as [token embeddings | W]; the
// temperature is fixed and not part of the trainable vector.
class TextEncoderParams {
 public:
  TextEncoderParams() = default;
  TextEncoderParams(std::size_t vocab_size, std::size_t dim, double temperature);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t dim() const noexcept { return dim_; }
  double temperature() const noexcept { return temperature_; }

  std::span<const double> token_embedding(std::uint32_t bucket) const {
    return {values_.data() + std::size_t{bucket} * dim_, dim_};
  }
  std::span<const double> projection() const {
    return {values_.data() + projection_offset(), dim_ * dim_};
  }
  std::size_t projection_offset() const noexcept { return vocab_size_ * dim_; }

  std::span<const double> values() const noexcept { return values_; }
  // Mutable access marks the parameters as a new revision, which
  // invalidates every PassageIndex built from the old values.
  std::span<double> mutable_values();

  std::uint64_t revision() const noexcept { return revision_; }

  bool operator==(const TextEncoderParams& other) const {
    return vocab_size_ == other.vocab_size_ && dim_ == other.dim_ &&
           temperature_ == other.temperature_ && values_ == other.values_;
  }

 private:
  std::size_t vocab_size_ = 0;
  std::size_t dim_ = 0;
  double temperature_ = kDefaultTemperature;
  std::vector<double> values_;
  std::uint64_t revision_ = 0;
};

// Token embeddings ~ U(-1/sqrt(d), 1/sqrt(d)), W = identity.
TextEncoderParams init_text_params(std::size_t vocab_size, std::size_t dim,
                                   double temperature, std::uint64_t seed);

// Unit vector. Throws EncodingError when the text has no tokens or the
// projected mean is exactly zero.
std::vector<double> encode(const TextEncoderParams& params, std::string_view text);

double pair_score(std::span<const double> query, std::span<const double> passage,
                  double temperature);

struct ContrastiveExample {
  std::string query;  // rendered query text
  ItemIndex positive = 0;
};

std::vector<ContrastiveExample> make_contrastive_examples(
    std::span<const UserSequence> data, const Catalog& catalog,
    const TemplateOptions& query_opts);

// Negatives for example m are drawn uniformly without replacement from
// I \ {positive}, from one Rng(seed) stream consumed in batch order.
std::vector<std::vector<ItemIndex>> sample_negatives(
    std::span<const ContrastiveExample> batch, std::size_t catalog_size,
    std::size_t n_negatives, std::uint64_t seed);

double infonce_loss(const TextEncoderParams& params,
                    std::span<const ContrastiveExample> batch,
                    const Catalog& catalog, std::size_t n_negatives,
                    std::uint64_t seed, const TemplateOptions& passage_opts = {});

// Gradient of infonce_loss: dense for W, sparse rows for the token table.
struct TextGradient {
  std::vector<double> projection;
  std::map<std::uint32_t, std::vector<double>> token_rows;
  double loss = 0.0;

  std::vector<double> to_dense(const TextEncoderParams& params) const;
};

TextGradient infonce_gradient(const TextEncoderParams& params,
                              std::span<const ContrastiveExample> batch,
                              const Catalog& catalog, std::size_t n_negatives,
                              std::uint64_t seed,
                              const TemplateOptions& passage_opts = {});

struct TextTrainConfig {
  double learning_rate = 1e-6;
  int local_epochs = 2;
  std::size_t batch_size = 32;
  std::size_t n_negatives = 32;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t dim = kDefaultTextDim;
  double temperature = kDefaultTemperature;
  TemplateOptions query_template{true, 10, "item"};
  TemplateOptions passage_template{true, std::nullopt, "item"};
};

TextEncoderParams text_train_local(TextEncoderParams params,
                                   std::span<const UserSequence> client_data,
                                   const Catalog& catalog,
                                   const TextTrainConfig& cfg,
                                   LocalTrainStats* stats = nullptr);

// Encoded passages for every catalog item under one parameter revision.
class PassageIndex {
 public:
  PassageIndex(const TextEncoderParams& params, const Catalog& catalog,
               const TemplateOptions& passage_opts);

  std::size_t size() const noexcept { return count_; }
  std::span<const double> passage(ItemIndex item) const {
    return {vectors_.data() + std::size_t{item} * dim_, dim_};
  }

  // s_j = <q, p_j> / tau for every item. Throws PreconditionError if
  // `params` is not the revision this index was built from.
  std::vector<double> score(const TextEncoderParams& params,
                            std::string_view query_text) const;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::uint64_t revision_ = 0;
  std::vector<double> vectors_;
};

std::vector<double> text_score_catalog(const TextEncoderParams& params,
                                       std::string_view query_text,
                                       const Catalog& catalog,
                                       const TemplateOptions& passage_opts = {});

}  // namespace fedrec
