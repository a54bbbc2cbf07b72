#include "cogenav/adapt.hpp"

#include <cmath>

#include "cogenav/errors.hpp"

namespace cogenav {

const char* variant_name(AdapterVariant v) {
  switch (v) {
    case AdapterVariant::kFull: return "full";
    case AdapterVariant::kNone: return "none";
    case AdapterVariant::kFfnMha: return "ffn_mha";
    case AdapterVariant::kGatedMhaNoRep: return "gateffn_mha_norep";
  }
  return "?";
}

AdapterVariant parse_variant(const std::string& s) {
  for (auto v : {AdapterVariant::kFull, AdapterVariant::kNone, AdapterVariant::kFfnMha, AdapterVariant::kGatedMhaNoRep})
    if (s == variant_name(v)) return v;
  fail(ErrorCode::kConfig, "unknown adapter variant: " + s);
}

void AdapterConfig::validate() const {
  require(in_dim >= 1 && out_dim >= 1, ErrorCode::kConfig, "adapter dims must be positive");
  require(num_heads >= 1 && out_dim % num_heads == 0, ErrorCode::kConfig, "adapter out_dim must be divisible by num_heads");
  require(hidden_mult > 0.0, ErrorCode::kConfig, "adapter hidden_mult must be positive");
}

DeltaUpsampler::DeltaUpsampler(ParamStore& store, const std::string& name, int width, std::mt19937_64& rng)
    : even(store, name + ".even", width, width, rng), odd(store, name + ".odd", width, width, rng) {
  delta_weight = &store.add(name + ".delta.weight", {width, 3});
  delta_bias = &store.add(name + ".delta.bias", {width});
  // Central difference to start with.
  for (int d = 0; d < width; ++d) {
    delta_weight->value[3 * d] = -0.5;
    delta_weight->value[3 * d + 2] = 0.5;
  }
  even.zero();
  odd.zero();
}

Tensor DeltaUpsampler::operator()(Graph& g, const Tensor& f) const {
  require(f.rank() == 2 && f.dim(0) >= 1, ErrorCode::kShape, "delta_upsample: expected [T, D] with T >= 1");
  Tensor delta = ops::depthwise_conv_time(f, g.param(*delta_weight), g.param(*delta_bias));
  return ops::interleave_rows(ops::add(f, even(g, delta)), ops::add(f, odd(g, delta)));
}

GatedFFN::GatedFFN(ParamStore& store, const std::string& name, int width, int hidden, std::mt19937_64& rng)
    : ffn(store, name, width, hidden, rng) {
  ffn.out.zero();
}

Tensor GatedFFN::operator()(Graph& g, const Tensor& x) const {
  Tensor h = ffn(g, x);
  return ops::add(x, ops::mul(ops::sigmoid(h), h));
}

Adapter::Adapter(ParamStore& store, const AdapterConfig& cfg, std::mt19937_64& rng, const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
  cfg_.validate();
  const int hidden = static_cast<int>(std::lround(cfg.hidden_mult * cfg.out_dim));
  const bool delta = cfg.variant == AdapterVariant::kFull || cfg.variant == AdapterVariant::kFfnMha;
  if (delta) upsampler_ = DeltaUpsampler(store, prefix + ".upsample", cfg.in_dim, rng);
  proj_ = nn::Linear(store, prefix + ".proj", cfg.in_dim, cfg.out_dim, rng);
  if (cfg.variant == AdapterVariant::kNone) return;
  ln_query_ = nn::LayerNorm(store, prefix + ".ln_query", cfg.out_dim);
  if (cfg.attention_mode == AttentionMode::kCross) ln_memory_ = nn::LayerNorm(store, prefix + ".ln_memory", cfg.out_dim);
  attn_ = nn::MultiHeadAttention(store, prefix + ".attn", cfg.out_dim, cfg.num_heads, rng);
  attn_.out.zero();
  if (cfg.variant == AdapterVariant::kFfnMha) {
    ln_ffn_ = nn::LayerNorm(store, prefix + ".ln_ffn", cfg.out_dim);
    plain_ffn_ = nn::FeedForward(store, prefix + ".ffn", cfg.out_dim, hidden, rng);
    plain_ffn_.out.zero();
  } else {
    gated_ffn_ = GatedFFN(store, prefix + ".gated_ffn", cfg.out_dim, hidden, rng);
  }
}

Tensor Adapter::upsample(Graph& g, const Tensor& f) const {
  require(f.rank() == 2 && f.dim(0) >= 1, ErrorCode::kShape, "adapter: expected [T, D] features");
  if (upsampler_.delta_weight) return upsampler_(g, f);
  return ops::repeat_rows(f, 2);
}

Tensor Adapter::operator()(Graph& g, const Tensor& f, const Tensor* audio_query) const {
  require(f.dim(1) == cfg_.in_dim, ErrorCode::kShape,
          "adapter: expected width " + std::to_string(cfg_.in_dim) + ", got " + std::to_string(f.dim(1)));
  Tensor x = proj_(g, upsample(g, f));
  if (cfg_.variant == AdapterVariant::kNone) return x;
  if (cfg_.attention_mode == AttentionMode::kCross) {
    require(audio_query != nullptr && audio_query->defined(), ErrorCode::kMode, "adapter: cross mode requires an audio query");
    require(audio_query->rank() == 2 && audio_query->dim(1) == cfg_.out_dim, ErrorCode::kShape,
            "adapter: audio query width mismatch");
    require(audio_query->dim(0) == x.dim(0), ErrorCode::kShape,
            "adapter: audio query length " + std::to_string(audio_query->dim(0)) + " vs visual length " +
                std::to_string(x.dim(0)));
    x = ops::add(*audio_query, attn_(g, ln_query_(g, *audio_query), ln_memory_(g, x), false));
  } else {
    Tensor h = ln_query_(g, x);
    x = ops::add(x, attn_(g, h, h, false));
  }
  if (cfg_.variant == AdapterVariant::kFfnMha) return ops::add(x, plain_ffn_(g, ln_ffn_(g, x)));
  return gated_ffn_(g, x);
}

}  // namespace cogenav
