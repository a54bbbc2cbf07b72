#pragma once

// Checkpoint container.
//
// Layout (little-endian):
//   bytes 0..7   magic "CGAVCKPT"
//   u32          format version (kCheckpointVersion)
//   u64          header length H
//   H bytes      UTF-8 JSON header:
//                  { "format_version": 1,
//                    "config": {...},          resolved model config
//                    "meta": {...},            checksums, vocabulary, provenance
//                    "tensors": [ {"name", "shape", "offset"} ... ] }
//                offsets count float64 values from the start of the payload
//   payload      float64 values of every tensor, in header order

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogenav/params.hpp"

namespace cogenav {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  nlohmann::json meta;
  std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;

  // Copies every stored tensor whose name starts with `prefix` into `store`.
  // Missing or mis-shaped parameters are format errors.
  void apply(ParamStore& store, std::string_view prefix = {}) const;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& config, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cogenav
