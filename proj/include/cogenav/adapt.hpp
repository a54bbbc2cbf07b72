#pragma once

// Feature adaptation between the 25 fps backbone and the 50 fps SR head:
// a learned 2x temporal upsampler followed by an attention + gated FFN
// stack. All residual branches start at zero so a fresh adapter is exactly
// repeat-and-project.

#include <random>
#include <string>

#include "cogenav/nn.hpp"

namespace cogenav {

enum class AttentionMode { kSelf, kCross };

// Layer arrangement; `kFull` is the shipped module, the rest exist for the
// ablation sweep.
enum class AdapterVariant {
  kFull,            // delta upsample + MHA + gated FFN
  kNone,            // repeat upsample + projection only
  kFfnMha,          // delta upsample + MHA + plain residual FFN
  kGatedMhaNoRep,   // repeat upsample + MHA + gated FFN
};

const char* variant_name(AdapterVariant v);
AdapterVariant parse_variant(const std::string& s);

struct AdapterConfig {
  int in_dim = 64;
  int out_dim = 64;
  int num_heads = 4;
  double hidden_mult = 4.0;
  AttentionMode attention_mode = AttentionMode::kSelf;
  AdapterVariant variant = AdapterVariant::kFull;

  void validate() const;
};

// E_t = F_t + P_e(delta_t), O_t = F_t + P_o(delta_t), output E_1 O_1 E_2 O_2 ...
struct DeltaUpsampler {
  Param* delta_weight = nullptr;  // [D, 3] depthwise temporal kernel
  Param* delta_bias = nullptr;
  nn::Linear even, odd;

  DeltaUpsampler() = default;
  DeltaUpsampler(ParamStore& store, const std::string& name, int width, std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& f) const;
};

// x + sigmoid(FFN(x)) * FFN(x), one FFN evaluation shared by gate and value.
struct GatedFFN {
  nn::FeedForward ffn;

  GatedFFN() = default;
  GatedFFN(ParamStore& store, const std::string& name, int width, int hidden, std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& x) const;
};

class Adapter {
 public:
  Adapter(ParamStore& store, const AdapterConfig& cfg, std::mt19937_64& rng, const std::string& prefix = "adapter");

  const AdapterConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

  Tensor upsample(Graph& g, const Tensor& f) const;  // [T,D] -> [2T,D]
  // f [T, in_dim]; audio_query [2T, out_dim] is required in cross mode.
  Tensor operator()(Graph& g, const Tensor& f, const Tensor* audio_query = nullptr) const;

 private:
  AdapterConfig cfg_;
  std::string prefix_;
  DeltaUpsampler upsampler_;
  nn::Linear proj_;
  nn::LayerNorm ln_query_, ln_memory_;
  nn::MultiHeadAttention attn_;
  nn::LayerNorm ln_ffn_;  // plain FFN arm only
  nn::FeedForward plain_ffn_;
  GatedFFN gated_ffn_;
};

}  // namespace cogenav
