#pragma once

// Binary checkpoint container.
//
//   magic   "CAPGENCK" (8 bytes)
//   version u32 little-endian (currently 1)
//   header  u64 byte length + UTF-8 JSON: model/head configs, vocab, step
//   count   u64 number of arrays
//   per array: u32 name length, name bytes, u32 rank, rank x u64 dims,
//              product(dims) x f64 little-endian values
//
// A JSON manifest mapping every array name to its shape is written next to
// the checkpoint as <path>.manifest.json.

#include <filesystem>

#include <json.hpp>

#include "capgen/trainer.hpp"

namespace capgen {

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json head_config_to_json(const DomainHeadConfig& config);
DomainHeadConfig head_config_from_json(const nlohmann::json& j);

void save_checkpoint(const CaptionModel& model, const std::filesystem::path& path);
CaptionModel load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace capgen
