#include "cogenav/nn.hpp"

#include <cmath>

namespace cogenav::nn {

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  weight = &store.add(name + ".weight", {in, out});
  bias = &store.add(name + ".bias", {out});
  init_fan_in(*weight, in, rng);
}

Tensor Linear::operator()(Graph& g, const Tensor& x) const {
  return ops::linear(x, g.param(*weight), g.param(*bias));
}

void Linear::zero() {
  init_constant(*weight, 0.0);
  init_constant(*bias, 0.0);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int width) {
  gamma = &store.add(name + ".gamma", {width});
  beta = &store.add(name + ".beta", {width});
  init_constant(*gamma, 1.0);
}

Tensor LayerNorm::operator()(Graph& g, const Tensor& x) const {
  return ops::layer_norm(x, g.param(*gamma), g.param(*beta));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int width, int heads_,
                                       std::mt19937_64& rng)
    : q(store, name + ".q", width, width, rng),
      k(store, name + ".k", width, width, rng),
      v(store, name + ".v", width, width, rng),
      out(store, name + ".out", width, width, rng),
      heads(heads_) {}

Tensor MultiHeadAttention::operator()(Graph& g, const Tensor& query, const Tensor& memory, bool causal) const {
  Tensor ctx = ops::attention(q(g, query), k(g, memory), v(g, memory), heads, causal);
  return out(g, ctx);
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, int width, int hidden, std::mt19937_64& rng)
    : in(store, name + ".in", width, hidden, rng), out(store, name + ".out", hidden, width, rng) {}

Tensor FeedForward::operator()(Graph& g, const Tensor& x) const {
  return out(g, ops::gelu(in(g, x)));
}

EncoderBlock::EncoderBlock(ParamStore& store, const std::string& name, int width, int heads, int hidden,
                           double dropout_, std::mt19937_64& rng)
    : ln1(store, name + ".ln1", width),
      ln2(store, name + ".ln2", width),
      attn(store, name + ".attn", width, heads, rng),
      ffn(store, name + ".ffn", width, hidden, rng),
      dropout(dropout_) {}

Tensor EncoderBlock::operator()(Graph& g, const Tensor& x) const {
  Tensor h = ln1(g, x);
  Tensor y = ops::add(x, ops::dropout(attn(g, h, h, false), dropout));
  return ops::add(y, ops::dropout(ffn(g, ln2(g, y)), dropout));
}

DecoderBlock::DecoderBlock(ParamStore& store, const std::string& name, int width, int heads, int hidden,
                           std::mt19937_64& rng)
    : ln1(store, name + ".ln1", width),
      ln2(store, name + ".ln2", width),
      ln3(store, name + ".ln3", width),
      self_attn(store, name + ".self_attn", width, heads, rng),
      cross_attn(store, name + ".cross_attn", width, heads, rng),
      ffn(store, name + ".ffn", width, hidden, rng) {}

Tensor DecoderBlock::operator()(Graph& g, const Tensor& x, const Tensor& memory) const {
  Tensor h = ln1(g, x);
  Tensor y = ops::add(x, self_attn(g, h, h, true));
  y = ops::add(y, cross_attn(g, ln2(g, y), memory, false));
  return ops::add(y, ffn(g, ln3(g, y)));
}

std::vector<double> sinusoidal_positions(int len, int width) {
  std::vector<double> pe(static_cast<std::size_t>(len) * width);
  for (int t = 0; t < len; ++t)
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe[static_cast<std::size_t>(t) * width + i] = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
  return pe;
}

Tensor add_positions(Graph& g, const Tensor& x) {
  return ops::add(x, g.constant(sinusoidal_positions(x.dim(0), x.dim(1)), x.shape()));
}

}  // namespace cogenav::nn
