#pragma once

// Pipeline commands behind the `cogenav` executable. Each command resolves
// its configuration (flags > config file > defaults), writes manifest.json
// into its output directory before doing any work, and throws cogenav::Error
// on failure.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogenav/config.hpp"
#include "cogenav/eval.hpp"

namespace cogenav {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kOutRootEnv = "COGENAV_OUT_ROOT";

struct CommandOptions {
  std::string config_path;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  std::optional<double> snr;
  std::optional<int> beam;
  std::optional<double> lambda;
  std::optional<int> steps;
  bool force = false;

  std::filesystem::path corpus;      // corpus directory
  std::filesystem::path head;        // head checkpoint
  std::filesystem::path checkpoint;  // model checkpoint
  std::string axis;                  // ablation axis
  std::vector<std::string> values;   // ablation values
  int index = 0;                     // heatmap utterance
  std::string split = "test";
  bool quiet = false;
};

// Output directory: --out if given, else $COGENAV_OUT_ROOT/<command>
// (default root "runs").
std::filesystem::path resolve_out_dir(const CommandOptions& opts, const std::string& command);
// Resolved config for `command`, with flag overrides applied.
RunConfig resolve_config(const CommandOptions& opts, const std::string& command);
void write_manifest(const std::filesystem::path& dir, const std::string& command, const CommandOptions& opts,
                    const RunConfig& resolved);

void cmd_gen_corpus(const CommandOptions& opts);
void cmd_pretrain_head(const CommandOptions& opts);
void cmd_train(const CommandOptions& opts);
EvalReport cmd_eval(const CommandOptions& opts);
double cmd_heatmap(const CommandOptions& opts);

struct AblationRow {
  std::string value;
  double vsr_wer = 0.0;
  double avsr_noisy_wer = 0.0;
  double audio_only_wer = 0.0;
  double sync_auc = 0.0;
};

// One training + evaluation per value on a shared corpus, head and seed.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                                      const Corpus& corpus, const std::filesystem::path& head,
                                      const std::filesystem::path& out_dir, bool quiet = true);
void write_ablation_csv(const std::filesystem::path& path, const std::string& axis, const std::vector<AblationRow>& rows);
std::vector<AblationRow> cmd_ablate(const CommandOptions& opts);

}  // namespace cogenav
