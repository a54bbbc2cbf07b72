#pragma once

// Joint contrastive + generative training with modality dropping.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogenav/model.hpp"
#include "cogenav/optim.hpp"

namespace cogenav {

struct TrainConfig {
  double lambda = 1.0;
  std::array<double, 3> modality_probs{0.2, 0.4, 0.4};  // A, V, AV
  double lr = 1e-5;
  int warmup_steps = 500;
  int batch_size = 4;
  int grad_accum = 4;
  std::uint64_t seed = 0;
  std::array<double, 2> snr_range_db{-5.0, 5.0};
  double negative_fraction = 0.5;
  int steps = 300;
  double phase1_fraction = 0.2;
  int min_shift = 2;
  double grad_clip = 0.0;     // global norm; 0 disables
  int checkpoint_every = 0;   // 0: final checkpoint only

  void validate() const;
};

struct StepReport {
  int step = 0;
  double l_co = 0.0;
  double l_gen = 0.0;
  double l_total = 0.0;
  Mode mode_drawn = Mode::kAV;  // first micro-batch's draw
  std::vector<Mode> modes;      // one per micro-batch
  double lr = 0.0;
  int phase = 1;

  nlohmann::json to_json() const;
};

Mode sample_modality(std::mt19937_64& rng, const std::array<double, 3>& probs);

// One optimizer step per call. Holds the optimizer state and the RNG that
// drives batch selection, negatives, noise and mode draws.
class Trainer {
 public:
  Trainer(CoGenAV& model, const std::vector<UtteranceSample>& train, const TrainConfig& cfg);

  StepReport step();
  int steps_done() const { return step_; }
  int phase1_steps() const { return phase1_steps_; }

 private:
  void set_phase(int phase);

  CoGenAV& model_;
  const std::vector<UtteranceSample>& train_;
  TrainConfig cfg_;
  Adam adam_;
  std::mt19937_64 rng_;
  int step_ = 0;
  int phase_ = 0;
  int phase1_steps_ = 0;
};

struct FitOptions {
  std::filesystem::path out_dir;  // empty: no files written
  nlohmann::json run_config;      // stored in checkpoint meta
  std::function<void(const StepReport&)> on_step;
};

struct FitResult {
  std::vector<StepReport> log;
  std::uint64_t head_checksum = 0;
};

// Runs cfg.steps optimizer steps. The head checksum is recorded before the
// first step and re-verified after the last; writes train_log.jsonl and
// model.ckpt (plus step checkpoints) when out_dir is set.
FitResult fit(CoGenAV& model, const std::vector<UtteranceSample>& train, const TrainConfig& cfg,
              const FitOptions& opts = {});

// Trains only the cross-attention adapter (added if absent) on clean audio
// queries against visual features.
void train_cross_adapter(CoGenAV& model, const std::vector<UtteranceSample>& train, const TrainConfig& cfg);

}  // namespace cogenav
