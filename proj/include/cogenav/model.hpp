#pragma once

// The assembled system: backbone ("backbone."), adapter ("adapter."),
// frozen SR head ("srhead.") and the optional cross-attention adapter used
// for clean AVSR ("xadapter."), all in one parameter store.

#include <cstdint>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "cogenav/adapt.hpp"
#include "cogenav/avnet.hpp"
#include "cogenav/srhead.hpp"

namespace cogenav {

struct ModelConfig {
  BackboneConfig backbone;
  AdapterConfig adapter;  // in_dim/out_dim are taken from backbone/head
  SRHeadConfig head;
};

inline constexpr const char* kBackbonePrefix = "backbone";
inline constexpr const char* kAdapterPrefix = "adapter";
inline constexpr const char* kHeadPrefix = "srhead";
inline constexpr const char* kCrossPrefix = "xadapter";

class CoGenAV {
 public:
  CoGenAV(const ModelConfig& cfg, std::uint64_t init_seed);
  CoGenAV(const CoGenAV&) = delete;
  CoGenAV& operator=(const CoGenAV&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const Backbone& backbone() const { return *backbone_; }
  const Adapter& adapter() const { return *adapter_; }
  const SRHead& head() const { return *head_; }
  const Adapter* cross_adapter() const { return cross_.get(); }
  void add_cross_adapter(std::uint64_t seed);

  // Context features [T, D] for the requested mode.
  Tensor context(Graph& g, const Matrix* mel, const LipClip* clip, Mode mode) const;
  // Adapter output [2T, D_sr] fed to the head encoder.
  Tensor head_memory(Graph& g, const Tensor& context) const;
  // Cross-attention path: head stem on `mel` queries the adapted visual stream.
  Tensor cross_memory(Graph& g, const Matrix& mel, const LipClip& clip) const;

  Tensor gen_loss(Graph& g, const Matrix* mel, const LipClip* clip, Mode mode, const TokenSequence& tokens) const;

  Matrix features(const Matrix* mel, const LipClip* clip, Mode mode) const;
  Matrix memory(const Matrix* mel, const LipClip* clip, Mode mode) const;
  TokenSequence transcribe(const Matrix* mel, const LipClip* clip, Mode mode, int beam) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<Adapter> adapter_;
  std::unique_ptr<SRHead> head_;
  std::unique_ptr<Adapter> cross_;
};

nlohmann::json model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Checkpoint meta always carries the head checksum and vocabulary.
void save_model(const std::filesystem::path& path, const CoGenAV& model, nlohmann::json meta = {});
std::unique_ptr<CoGenAV> load_model(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

// Loads only the head namespace of a head checkpoint into `model`, checking
// its recorded checksum. Throws kRefused when the record is absent or wrong.
std::uint64_t load_head(CoGenAV& model, const std::filesystem::path& head_checkpoint);

}  // namespace cogenav
