#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "fedrec/federation.hpp"
#include "fedrec/id_retriever.hpp"
#include "fedrec/text_retriever.hpp"

namespace fedrec {

// A checkpoint is `<stem>.bin` (flat little-endian IEEE-754 doubles) plus
// `<stem>.json` recording kind, shapes and an FNV-1a digest of the bytes.

void write_raw_checkpoint(const std::filesystem::path& stem,
                          std::span<const double> values, nlohmann::json sidecar);

void save_checkpoint(const std::filesystem::path& stem, const IdRetrieverParams& params);
void save_checkpoint(const std::filesystem::path& stem, const TextEncoderParams& params);

IdRetrieverParams load_id_checkpoint(const std::filesystem::path& stem);
TextEncoderParams load_text_checkpoint(const std::filesystem::path& stem);

// `<dir>/id_round<r>` and `<dir>/text_round<r>`, plus `<dir>/latest.json`.
void save_global_model(const std::filesystem::path& dir, const GlobalModel& model);
GlobalModel load_global_model(const std::filesystem::path& dir);

}  // namespace fedrec
