#pragma once

// Representation backbone: frame-synchronous audio and visual encoders
// feeding one shared transformer context encoder with three input modes.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cogenav/nn.hpp"
#include "cogenav/synthcorpus.hpp"

namespace cogenav {

enum class Mode { kA, kV, kAV };
const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct BackboneConfig {
  int feat_dim = 64;
  int num_blocks = 2;
  int num_heads = 4;
  int mel_bins = 80;
  double dropout = 0.1;
  // Audio conv channel plan 1 -> 32 -> 64.
  int audio_channels1 = 32;
  int audio_channels2 = 64;
  // Visual trunk widths: 3D stem, then two residual stages.
  int video_stem_channels = 16;
  int video_channels = 32;

  void validate() const;
};

struct FeatureSequence {
  Matrix values;  // [T, D]
  int rate = 25;  // frames per second (25 backbone, 50 after upsampling)
};

// log-compressed, roughly unit-scaled encoder input from linear mel power.
Matrix log_mel(const Matrix& mel_power);
// Pixels in [0,1] mapped to [-1,1] as a [T,H,W] tensor.
Tensor video_input(Graph& g, const LipClip& clip, bool requires_grad = false);

class Backbone {
 public:
  Backbone(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng, const std::string& prefix = "backbone");

  const BackboneConfig& config() const { return cfg_; }

  // log_mel [4T, B] -> [T, D]
  Tensor encode_audio(Graph& g, const Tensor& log_mel) const;
  Tensor encode_audio(Graph& g, const Matrix& mel_power) const;
  // frames [T, H, W] (already mapped by video_input) -> [T, D]
  Tensor encode_video(Graph& g, const Tensor& frames) const;
  Tensor encode_video(Graph& g, const LipClip& clip) const;
  // Output of the 3D stem alone: [T, C, H', W'].
  Tensor video_stem(Graph& g, const Tensor& frames) const;
  // Shared transformer; `f_a`/`f_v` may be null when the mode does not use them.
  Tensor encode_context(Graph& g, const Tensor* f_a, const Tensor* f_v, Mode mode) const;

  // Convenience: full pass for one modality combination, no gradients.
  FeatureSequence features(const Matrix* mel_power, const LipClip* clip, Mode mode) const;

 private:
  struct Conv {
    Param* weight = nullptr;
    Param* bias = nullptr;
  };
  Conv make_conv(ParamStore& store, const std::string& name, Shape shape, std::mt19937_64& rng);
  Tensor conv(Graph& g, const Conv& c, const Tensor& x, int stride, int pad) const;

  BackboneConfig cfg_;
  Conv audio_conv1_, audio_conv2_;
  nn::Linear audio_proj_;
  Conv video_stem_, block1_conv1_, block1_conv2_, block1_skip_, block2_conv1_, block2_conv2_;
  nn::Linear video_proj_;
  nn::Linear fusion_;
  std::vector<nn::EncoderBlock> blocks_;
  nn::LayerNorm ln_out_;
};

}  // namespace cogenav
