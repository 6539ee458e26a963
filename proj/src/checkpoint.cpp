#include "fedrec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

#include "fedrec/errors.hpp"
#include "fedrec/hash.hpp"

namespace fedrec {

namespace {

constexpr const char* kFormat = "fedrec-checkpoint-v1";

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

void write_doubles(std::ostream& out, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      bytes[i * 8 + b] = static_cast<unsigned char>(bits & 0xffU);
      bits >>= 8;
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_doubles(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes(count * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != EOF) {
    throw IntegrityError("checkpoint " + path.string() + " has the wrong size");
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[i * 8 + b];
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

nlohmann::json read_sidecar(const std::filesystem::path& stem, const char* kind) {
  std::ifstream in(with_suffix(stem, ".json"));
  if (!in) throw ValidationError("cannot open checkpoint sidecar for " + stem.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("bad checkpoint sidecar: " + std::string(e.what()));
  }
  if (meta.value("format", "") != kFormat || meta.value("kind", "") != kind) {
    throw IntegrityError("checkpoint " + stem.string() + " is not a " + kind +
                         " checkpoint");
  }
  return meta;
}

std::vector<double> read_verified(const std::filesystem::path& stem,
                                  const nlohmann::json& meta) {
  const auto count = meta.at("count").get<std::size_t>();
  auto values = read_doubles(with_suffix(stem, ".bin"), count);
  if (to_hex(fnv1a64_doubles(values)) != meta.at("content_hash").get<std::string>()) {
    throw IntegrityError("checkpoint " + stem.string() + " fails its content hash");
  }
  return values;
}

}  // namespace

void write_raw_checkpoint(const std::filesystem::path& stem,
                          std::span<const double> values, nlohmann::json sidecar) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw Error("cannot write " + with_suffix(stem, ".bin").string());
  write_doubles(bin, values);
  sidecar["format"] = kFormat;
  sidecar["count"] = values.size();
  sidecar["content_hash"] = to_hex(fnv1a64_doubles(values));
  std::ofstream json(with_suffix(stem, ".json"));
  json << sidecar.dump(2) << '\n';
}

void save_checkpoint(const std::filesystem::path& stem, const IdRetrieverParams& params) {
  const auto n = params.num_items();
  const auto d = params.dim();
  write_raw_checkpoint(stem, params.values(),
                       {{"kind", "id-retriever"},
                        {"num_items", n},
                        {"dim", d},
                        {"shapes",
                         {{"item_embeddings", {n, d}},
                          {"raw_decay", {d}},
                          {"input_map", {d, d}}}}});
}

void save_checkpoint(const std::filesystem::path& stem, const TextEncoderParams& params) {
  const auto v = params.vocab_size();
  const auto d = params.dim();
  write_raw_checkpoint(stem, params.values(),
                       {{"kind", "text-encoder"},
                        {"vocab_size", v},
                        {"dim", d},
                        {"temperature", params.temperature()},
                        {"shapes", {{"token_embeddings", {v, d}}, {"projection", {d, d}}}}});
}

IdRetrieverParams load_id_checkpoint(const std::filesystem::path& stem) {
  const auto meta = read_sidecar(stem, "id-retriever");
  IdRetrieverParams params(meta.at("num_items").get<std::size_t>(),
                           meta.at("dim").get<std::size_t>());
  const auto values = read_verified(stem, meta);
  if (values.size() != params.values().size()) {
    throw IntegrityError("id checkpoint shape does not match its payload");
  }
  std::copy(values.begin(), values.end(), params.values().begin());
  return params;
}

TextEncoderParams load_text_checkpoint(const std::filesystem::path& stem) {
  const auto meta = read_sidecar(stem, "text-encoder");
  TextEncoderParams params(meta.at("vocab_size").get<std::size_t>(),
                           meta.at("dim").get<std::size_t>(),
                           meta.at("temperature").get<double>());
  const auto values = read_verified(stem, meta);
  if (values.size() != params.values().size()) {
    throw IntegrityError("text checkpoint shape does not match its payload");
  }
  std::copy(values.begin(), values.end(), params.mutable_values().begin());
  return params;
}

void save_global_model(const std::filesystem::path& dir, const GlobalModel& model) {
  std::filesystem::create_directories(dir);
  const auto r = std::to_string(model.round);
  save_checkpoint(dir / ("id_round" + r), model.id_params);
  save_checkpoint(dir / ("text_round" + r), model.text_params);
  std::ofstream latest(dir / "latest.json");
  latest << nlohmann::json{{"round", model.round},
                           {"id", "id_round" + r},
                           {"text", "text_round" + r},
                           {"checksum", to_hex(model.checksum())}}
                .dump(2)
         << '\n';
}

GlobalModel load_global_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "latest.json");
  if (!in) throw ValidationError("no latest.json in " + dir.string());
  const auto latest = nlohmann::json::parse(in);
  GlobalModel model;
  model.round = latest.at("round").get<int>();
  model.id_params = load_id_checkpoint(dir / latest.at("id").get<std::string>());
  model.text_params = load_text_checkpoint(dir / latest.at("text").get<std::string>());
  return model;
}

}  // namespace fedrec
