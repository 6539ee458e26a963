#include "fedrec/text_retriever.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <string>

#include "fedrec/errors.hpp"
#include "fedrec/hash.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

namespace {

std::atomic<std::uint64_t> g_next_revision{1};

std::uint64_t fresh_revision() { return g_next_revision.fetch_add(1); }

std::string_view article_for(std::string_view noun) {
  if (noun.empty()) return "a";
  switch (std::tolower(static_cast<unsigned char>(noun.front()))) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return "an";
    default:
      return "a";
  }
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Forward pass of one encode, kept for backprop.
struct Encoded {
  std::vector<std::uint32_t> tokens;
  std::vector<double> mean;  // m
  std::vector<double> unit;  // u = z / |z|
  double norm = 0.0;         // |z|
};

Encoded encode_with_state(const TextEncoderParams& params, std::string_view text) {
  Encoded enc;
  enc.tokens = tokenize(text, params.vocab_size());
  if (enc.tokens.empty()) {
    throw EncodingError("text has no tokens: '" + std::string(text) + "'");
  }
  const std::size_t d = params.dim();
  enc.mean.assign(d, 0.0);
  // Tokens are sorted, so the sum is independent of token order in the text.
  for (const auto t : enc.tokens) {
    const auto row = params.token_embedding(t);
    for (std::size_t c = 0; c < d; ++c) enc.mean[c] += row[c];
  }
  const double inv_n = 1.0 / static_cast<double>(enc.tokens.size());
  for (auto& v : enc.mean) v *= inv_n;

  const auto w = params.projection();
  enc.unit.assign(d, 0.0);
  double sq = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < d; ++c) z += w[r * d + c] * enc.mean[c];
    enc.unit[r] = z;
    sq += z * z;
  }
  enc.norm = std::sqrt(sq);
  if (!(enc.norm > 0.0) || !std::isfinite(enc.norm)) {
    throw EncodingError("degenerate encoder parameters: projected vector has norm " +
                        std::to_string(enc.norm));
  }
  for (auto& v : enc.unit) v /= enc.norm;
  return enc;
}

// Accumulates dL/du for one encode into the parameter gradient.
void backprop_encode(const TextEncoderParams& params, const Encoded& enc,
                     std::span<const double> d_unit, TextGradient& grad) {
  const std::size_t d = params.dim();
  double dot = 0.0;
  for (std::size_t c = 0; c < d; ++c) dot += enc.unit[c] * d_unit[c];
  std::vector<double> dz(d);
  for (std::size_t c = 0; c < d; ++c) {
    dz[c] = (d_unit[c] - enc.unit[c] * dot) / enc.norm;
  }
  const auto w = params.projection();
  std::vector<double> dm(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      grad.projection[r * d + c] += dz[r] * enc.mean[c];
      dm[c] += w[r * d + c] * dz[r];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(enc.tokens.size());
  for (const auto t : enc.tokens) {
    auto& row = grad.token_rows[t];
    if (row.empty()) row.assign(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) row[c] += dm[c] * inv_n;
  }
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (const double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Shared body of infonce_loss / infonce_gradient.
TextGradient infonce_impl(const TextEncoderParams& params,
                          std::span<const ContrastiveExample> batch,
                          const Catalog& catalog, std::size_t n_negatives,
                          std::uint64_t seed, const TemplateOptions& passage_opts,
                          bool want_grad) {
  if (batch.empty()) throw PreconditionError("infonce: empty batch");
  const auto negatives = sample_negatives(batch, catalog.size(), n_negatives, seed);
  const std::size_t d = params.dim();
  const double tau = params.temperature();
  const double scale = 1.0 / static_cast<double>(batch.size());

  TextGradient grad;
  if (want_grad) grad.projection.assign(d * d, 0.0);
  double total = 0.0;
  std::vector<Encoded> passages;
  std::vector<double> scores;
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const auto query = encode_with_state(params, batch[m].query);
    passages.clear();
    passages.push_back(encode_with_state(
        params, render_passage(batch[m].positive, catalog, passage_opts).text));
    for (const auto neg : negatives[m]) {
      passages.push_back(
          encode_with_state(params, render_passage(neg, catalog, passage_opts).text));
    }
    scores.resize(passages.size());
    for (std::size_t j = 0; j < passages.size(); ++j) {
      scores[j] = pair_score(query.unit, passages[j].unit, tau);
    }
    const double lse = log_sum_exp(scores);
    total += lse - scores[0];
    if (!want_grad) continue;

    std::vector<double> d_query(d, 0.0);
    std::vector<double> d_passage(d);
    for (std::size_t j = 0; j < passages.size(); ++j) {
      double ds = std::exp(scores[j] - lse);
      if (j == 0) ds -= 1.0;
      ds *= scale / tau;
      for (std::size_t c = 0; c < d; ++c) {
        d_query[c] += ds * passages[j].unit[c];
        d_passage[c] = ds * query.unit[c];
      }
      backprop_encode(params, passages[j], d_passage, grad);
    }
    backprop_encode(params, query, d_query, grad);
  }
  grad.loss = total * scale;
  return grad;
}

}  // namespace

std::string describe_item(const ItemMeta& item, bool include_attributes,
                          std::string_view noun) {
  std::string out = item.title;
  if (include_attributes && !item.attributes.empty()) {
    out += ", ";
    out += article_for(noun);
    out += ' ';
    out += noun;
    out += " about ";
    for (std::size_t i = 0; i < item.attributes.size(); ++i) {
      if (i > 0) out += ", ";
      out += item.attributes[i];
    }
  }
  return out;
}

RenderedQuery render_query(std::span<const ItemIndex> history,
                           const Catalog& catalog, const TemplateOptions& opts) {
  if (history.empty()) throw PreconditionError("render_query: empty history");
  std::size_t first = 0;
  if (opts.last_n && *opts.last_n < history.size()) {
    first = history.size() - *opts.last_n;
  }
  RenderedQuery query{"query: "};
  for (std::size_t i = first; i < history.size(); ++i) {
    if (i > first) query.text += "; ";
    query.text += describe_item(catalog.at(history[i]), opts.include_attributes, opts.noun);
  }
  return query;
}

RenderedPassage render_passage(ItemIndex item, const Catalog& catalog,
                               const TemplateOptions& opts) {
  return {"passage: " +
          describe_item(catalog.at(item), opts.include_attributes, opts.noun)};
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t vocab_size) {
  if (vocab_size == 0) throw ConfigError("tokenize: vocab_size must be positive");
  std::vector<std::uint32_t> buckets;
  for (const auto& tok : split_tokens(text)) {
    buckets.push_back(static_cast<std::uint32_t>(fnv1a64(tok) % vocab_size));
  }
  std::sort(buckets.begin(), buckets.end());
  return buckets;
}

TextEncoderParams::TextEncoderParams(std::size_t vocab_size, std::size_t dim,
                                     double temperature)
    : vocab_size_(vocab_size),
      dim_(dim),
      temperature_(temperature),
      values_(vocab_size * dim + dim * dim, 0.0),
      revision_(fresh_revision()) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

std::span<double> TextEncoderParams::mutable_values() {
  revision_ = fresh_revision();
  return values_;
}

TextEncoderParams init_text_params(std::size_t vocab_size, std::size_t dim,
                                   double temperature, std::uint64_t seed) {
  if (vocab_size == 0 || dim == 0) {
    throw ConfigError("text encoder needs vocab_size >= 1 and dim >= 1");
  }
  TextEncoderParams params(vocab_size, dim, temperature);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto values = params.mutable_values();
  for (std::size_t i = 0; i < vocab_size * dim; ++i) {
    values[i] = rng.uniform(-bound, bound);
  }
  for (std::size_t r = 0; r < dim; ++r) {
    values[params.projection_offset() + r * dim + r] = 1.0;
  }
  return params;
}

std::vector<double> encode(const TextEncoderParams& params, std::string_view text) {
  return encode_with_state(params, text).unit;
}

double pair_score(std::span<const double> query, std::span<const double> passage,
                  double temperature) {
  return dot(query, passage) / temperature;
}

std::vector<ContrastiveExample> make_contrastive_examples(
    std::span<const UserSequence> data, const Catalog& catalog,
    const TemplateOptions& query_opts) {
  std::vector<ContrastiveExample> out;
  out.reserve(data.size());
  for (const auto& seq : data) {
    out.push_back({render_query(seq.history, catalog, query_opts).text, seq.target});
  }
  return out;
}

std::vector<std::vector<ItemIndex>> sample_negatives(
    std::span<const ContrastiveExample> batch, std::size_t catalog_size,
    std::size_t n_negatives, std::uint64_t seed) {
  if (n_negatives == 0) throw ConfigError("n_negatives must be >= 1");
  if (catalog_size < n_negatives + 1) {
    throw ConfigError("catalog of " + std::to_string(catalog_size) +
                      " items is too small for " + std::to_string(n_negatives) +
                      " negatives");
  }
  Rng rng(seed);
  std::vector<std::vector<ItemIndex>> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) {
    if (ex.positive >= catalog_size) {
      throw LookupError("positive item outside catalog");
    }
    std::vector<ItemIndex> negs;
    for (const auto k : rng.sample_without_replacement(catalog_size - 1, n_negatives)) {
      // Skip over the positive to sample from I \ {y}.
      negs.push_back(static_cast<ItemIndex>(k < ex.positive ? k : k + 1));
    }
    out.push_back(std::move(negs));
  }
  return out;
}

double infonce_loss(const TextEncoderParams& params,
                    std::span<const ContrastiveExample> batch,
                    const Catalog& catalog, std::size_t n_negatives,
                    std::uint64_t seed, const TemplateOptions& passage_opts) {
  return infonce_impl(params, batch, catalog, n_negatives, seed, passage_opts, false)
      .loss;
}

TextGradient infonce_gradient(const TextEncoderParams& params,
                              std::span<const ContrastiveExample> batch,
                              const Catalog& catalog, std::size_t n_negatives,
                              std::uint64_t seed,
                              const TemplateOptions& passage_opts) {
  return infonce_impl(params, batch, catalog, n_negatives, seed, passage_opts, true);
}

std::vector<double> TextGradient::to_dense(const TextEncoderParams& params) const {
  std::vector<double> dense(params.values().size(), 0.0);
  const std::size_t d = params.dim();
  for (const auto& [bucket, row] : token_rows) {
    std::copy(row.begin(), row.end(), dense.begin() + std::size_t{bucket} * d);
  }
  std::copy(projection.begin(), projection.end(),
            dense.begin() + static_cast<std::ptrdiff_t>(params.projection_offset()));
  return dense;
}

TextEncoderParams text_train_local(TextEncoderParams params,
                                   std::span<const UserSequence> client_data,
                                   const Catalog& catalog,
                                   const TextTrainConfig& cfg,
                                   LocalTrainStats* stats) {
  if (client_data.empty()) throw PreconditionError("text_train_local: no data");
  if (!(cfg.learning_rate >= 0.0) || cfg.local_epochs < 1 || cfg.batch_size == 0) {
    throw ConfigError("text_train_local: invalid training config");
  }
  const auto examples = make_contrastive_examples(client_data, catalog, cfg.query_template);
  Rng rng(cfg.seed);
  const bool adam = cfg.optimizer == OptimizerKind::kAdam;
  AdamState adam_state(adam ? params.values().size() : 0);
  const std::size_t d = params.dim();
  LocalTrainStats local;
  std::vector<ContrastiveExample> batch;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto batches = make_batches(examples.size(), cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      batch.clear();
      for (const auto idx : batches[b]) batch.push_back(examples[idx]);
      const auto grad = infonce_gradient(params, batch, catalog, cfg.n_negatives,
                                         rng.next(), cfg.passage_template);
      if (!std::isfinite(grad.loss)) {
        throw TrainingDiverged("text retriever loss is not finite at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      epoch_loss += grad.loss;
      ++local.steps;
      if (cfg.learning_rate == 0.0) continue;
      auto values = params.mutable_values();
      const double lr = cfg.learning_rate;
      if (adam) {
        adam_state.begin_step();
        adam_state.update(values, params.projection_offset(), grad.projection, lr);
        for (const auto& [bucket, row] : grad.token_rows) {
          adam_state.update(values, std::size_t{bucket} * d, row, lr);
        }
      } else {
        for (std::size_t i = 0; i < grad.projection.size(); ++i) {
          values[params.projection_offset() + i] -= lr * grad.projection[i];
        }
        for (const auto& [bucket, row] : grad.token_rows) {
          double* dst = values.data() + std::size_t{bucket} * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] -= lr * row[c];
        }
      }
    }
    local.mean_loss = epoch_loss / static_cast<double>(batches.size());
  }
  if (stats != nullptr) *stats = local;
  return params;
}

PassageIndex::PassageIndex(const TextEncoderParams& params, const Catalog& catalog,
                           const TemplateOptions& passage_opts)
    : count_(catalog.size()), dim_(params.dim()), revision_(params.revision()) {
  if (catalog.empty()) throw PreconditionError("PassageIndex: empty catalog");
  vectors_.reserve(count_ * dim_);
  for (std::size_t j = 0; j < count_; ++j) {
    const auto p = encode(params,
                          render_passage(static_cast<ItemIndex>(j), catalog, passage_opts).text);
    vectors_.insert(vectors_.end(), p.begin(), p.end());
  }
}

std::vector<double> PassageIndex::score(const TextEncoderParams& params,
                                        std::string_view query_text) const {
  if (params.revision() != revision_) {
    throw PreconditionError("PassageIndex is stale for these encoder parameters");
  }
  const auto q = encode(params, query_text);
  std::vector<double> scores(count_);
  for (std::size_t j = 0; j < count_; ++j) {
    scores[j] = pair_score(q, passage(static_cast<ItemIndex>(j)), params.temperature());
  }
  return scores;
}

std::vector<double> text_score_catalog(const TextEncoderParams& params,
                                       std::string_view query_text,
                                       const Catalog& catalog,
                                       const TemplateOptions& passage_opts) {
  return PassageIndex(params, catalog, passage_opts).score(params, query_text);
}

}  // namespace fedrec
