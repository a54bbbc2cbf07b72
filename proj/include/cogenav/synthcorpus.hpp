#pragma once

// Deterministic synthetic audio-visual speech corpus.
//
// Every content token k renders as
//   * audio: 4*frames_per_token mel frames that energize a token-specific
//     contiguous band of bins, with an amplitude step per video frame, and
//   * video: frames_per_token grayscale mouth images whose ellipse width and
//     height are token-specific and whose aperture closes over the token.
// Speakers add a fixed gain/floor/tilt to the audio and a brightness,
// scale and position offset to the mouth.
//
// Mel spectrograms hold LINEAR power per cell (energy = squared magnitude).
// Encoders log-compress at their input; noise is mixed in this linear domain.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cogenav/tensor.hpp"

namespace cogenav {

using TokenSequence = std::vector<int>;  // content token ids in [0, vocab_size)

struct CorpusConfig {
  int vocab_size = 16;
  int frames_per_token = 2;
  int mel_bins = 80;
  int image_size = 16;
  int min_tokens = 4;
  int max_tokens = 12;
  std::uint64_t seed = 0;

  void validate() const;
};

// Grayscale clip [frames, height, width] with pixels in [0, 1].
struct LipClip {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const LipClip&) const = default;
};

struct UtteranceSample {
  std::string id;
  TokenSequence tokens;
  Matrix mel;     // [4T, mel_bins], linear power
  LipClip video;  // [T, H, W]
  int speaker_id = 0;

  int video_frames() const { return video.frames; }
};

struct SpeakerStyle {
  double gain = 1.0;
  double floor = 0.02;
  double tilt = 0.0;
  double brightness = 0.0;
  double mouth_scale = 1.0;
  double dx = 0.0;
  double dy = 0.0;
};

SpeakerStyle speaker_style(const CorpusConfig& cfg, int speaker_id);

// Pure function of (cfg.seed, tokens, speaker_id).
UtteranceSample render_utterance(const CorpusConfig& cfg, const TokenSequence& tokens, int speaker_id);
// Draws a transcript from (cfg.seed, speaker_id, rng_state) and renders it.
UtteranceSample gen_utterance(const CorpusConfig& cfg, int speaker_id, std::uint64_t rng_state);

// Nearest-template token decoding from a single modality.
TokenSequence decode_mel_tokens(const CorpusConfig& cfg, const Matrix& mel, int speaker_id);
TokenSequence decode_video_tokens(const CorpusConfig& cfg, const LipClip& video, int speaker_id);

inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

// clean + g * noise with g chosen so that 10*log10(E_clean / E_scaled_noise)
// equals snr_db; E is the mean cell power. snr_db = +inf returns clean.
Matrix mix_noise(const Matrix& clean, const Matrix& noise, double snr_db);
// Tiles or crops noise rows to `rows`.
Matrix fit_noise(const Matrix& noise, int rows);
double measure_snr(const Matrix& clean, const Matrix& mixed);

enum class Provenance { kAligned, kShifted, kCrossSpeaker };
const char* provenance_name(Provenance p);

struct SyncPair {
  Matrix mel;
  LipClip video;
  int label = 1;
  Provenance provenance = Provenance::kAligned;
  int audio_source = 0;
  int video_source = 0;
  int shift = 0;  // circular video shift (frames) for shifted negatives
};

// shifted[t] = clip[(t - shift) mod T]
LipClip shift_clip(const LipClip& clip, int shift);
LipClip crop_clip(const LipClip& clip, int frames);
Matrix crop_rows(const Matrix& m, int rows);

// One pair per sample; exactly floor(negative_fraction * N) of them are
// negatives, split evenly between circularly shifted and cross-utterance.
std::vector<SyncPair> make_pairs(const std::vector<UtteranceSample>& samples, double negative_fraction,
                                 int min_shift, std::uint64_t seed);

// ---- corpus on disk --------------------------------------------------------

struct SplitSizes {
  int train = 200;
  int val = 50;
  int test = 100;
};

struct CorpusSpec {
  CorpusConfig corpus;
  SplitSizes splits;
  int num_speakers = 8;
  bool disjoint_speakers = false;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<UtteranceSample> train, val, test;

  const std::vector<UtteranceSample>& split(const std::string& name) const;
};

Corpus gen_corpus(const CorpusSpec& spec);

std::string symbol_name(int token);
std::string token_string(const TokenSequence& tokens);

// Writes <dir>/corpus.json and <dir>/<split>/{index.tsv, mel/, video/}.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace cogenav
