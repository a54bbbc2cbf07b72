#pragma once

// Layer building blocks shared by the backbone, adapter and SR head.

#include <random>
#include <string>

#include "cogenav/ops.hpp"
#include "cogenav/params.hpp"

namespace cogenav::nn {

struct Linear {
  Param* weight = nullptr;  // [in, out]
  Param* bias = nullptr;    // [out]

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& x) const;
  void zero();
};

struct LayerNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int width);
  Tensor operator()(Graph& g, const Tensor& x) const;
};

// Projections around ops::attention. Query and key/value streams may differ
// (cross-attention).
struct MultiHeadAttention {
  Linear q, k, v, out;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, int width, int heads, std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& query, const Tensor& memory, bool causal) const;
};

// linear -> GELU -> linear
struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, int width, int hidden, std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& x) const;
};

// Pre-norm encoder block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct EncoderBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ffn;
  double dropout = 0.0;

  EncoderBlock() = default;
  EncoderBlock(ParamStore& store, const std::string& name, int width, int heads, int hidden, double dropout,
               std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& x) const;
};

// Pre-norm decoder block with causal self-attention and cross-attention.
struct DecoderBlock {
  LayerNorm ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;

  DecoderBlock() = default;
  DecoderBlock(ParamStore& store, const std::string& name, int width, int heads, int hidden, std::mt19937_64& rng);
  Tensor operator()(Graph& g, const Tensor& x, const Tensor& memory) const;
};

// Fixed sinusoidal positions [len, width].
std::vector<double> sinusoidal_positions(int len, int width);
Tensor add_positions(Graph& g, const Tensor& x);

}  // namespace cogenav::nn
