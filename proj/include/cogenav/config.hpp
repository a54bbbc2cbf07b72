#pragma once

// JSON config files. Every section mirrors the field names of its struct;
// missing keys keep their defaults, unknown keys are configuration errors.

#include <filesystem>

#include <json.hpp>

#include "cogenav/model.hpp"
#include "cogenav/synthcorpus.hpp"
#include "cogenav/train.hpp"

namespace cogenav {

struct EvalSettings {
  int beam = 3;
  double snr_db = 0.0;
  int max_utterances = 0;
  int band = 1;
  int cross_steps = 200;  // cross-adapter training for AVSR_clean

  void validate() const;
};

struct RunConfig {
  CorpusSpec corpus;
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  EvalSettings eval;

  void validate() const;
};

nlohmann::json to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j, CorpusSpec base = {});
nlohmann::json to_json(const BackboneConfig& c);
BackboneConfig backbone_config_from_json(const nlohmann::json& j, BackboneConfig base = {});
nlohmann::json to_json(const AdapterConfig& c);
AdapterConfig adapter_config_from_json(const nlohmann::json& j, AdapterConfig base = {});
nlohmann::json to_json(const SRHeadConfig& c);
SRHeadConfig srhead_config_from_json(const nlohmann::json& j, SRHeadConfig base = {});
nlohmann::json to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j, PretrainConfig base = {});
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const EvalSettings& c);
EvalSettings eval_settings_from_json(const nlohmann::json& j, EvalSettings base = {});

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace cogenav
