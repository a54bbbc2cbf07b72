#pragma once

// Metrics, heatmap export and task-level evaluation.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogenav/model.hpp"

namespace cogenav {

int edit_distance(const TokenSequence& a, const TokenSequence& b);
// Token error rate over content tokens (ids outside [0, vocab.content) are
// dropped; decoding stops at EOS).
double wer(const TokenSequence& reference, const TokenSequence& hypothesis, const Vocabulary& vocab = {});

// Area under the ROC curve via the rank statistic, ties counted half.
double sync_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Writes <stem>.csv (header line, then one row per audio frame) and
// <stem>.pgm (binary 8-bit grayscale, value = round((s + 1) * 127.5)).
void heatmap_export(const Matrix& s, const std::filesystem::path& stem);
Matrix read_heatmap_csv(const std::filesystem::path& path);

// Mean of S[i][j] over |i-j| <= band minus mean over |i-j| > band (an empty
// off-band region contributes 0).
double diagonal_dominance(const Matrix& s, int band);

enum class Task { kVSR, kAVSRClean, kAVSRNoisy, kSync, kASDLite };
const char* task_name(Task t);
Task parse_task(const std::string& s);

struct EvalConditions {
  double snr_db = std::numeric_limits<double>::quiet_NaN();  // required for AVSR_noisy
  int beam = 3;
  std::string split = "test";
  std::string checkpoint_id;
  int max_utterances = 0;  // 0: whole split
  std::uint64_t seed = 0;  // pair construction / noise assignment
  int candidates = 2;      // ASD_lite tracks per audio stream
};

struct EvalReport {
  std::string task;
  std::string metric_name;
  double value = 0.0;
  EvalConditions conditions;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

EvalReport evaluate_task(Task task, const CoGenAV& model, const std::vector<UtteranceSample>& split,
                         const EvalConditions& cond);
void append_report(const std::filesystem::path& path, const EvalReport& report);

// Per-utterance helpers reused by the heatmap command and tests.
Matrix alignment_matrix(const CoGenAV& model, const UtteranceSample& s);
double mean_dominance(const CoGenAV& model, const std::vector<UtteranceSample>& samples, int band);

}  // namespace cogenav
