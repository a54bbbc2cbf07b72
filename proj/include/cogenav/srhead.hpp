#pragma once

// Small encoder-decoder recognizer standing in for a pretrained ASR model.
// Pretrained once on clean synthetic mel -> tokens, then frozen.
//
// Input path: log-mel [4T, B] -> stem (kernel-3 stride-2 temporal conv,
// GELU) -> [2T, D_sr] -> encoder. Adapted CoGenAV features enter the encoder
// directly, bypassing the stem.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogenav/decode.hpp"
#include "cogenav/nn.hpp"
#include "cogenav/synthcorpus.hpp"

namespace cogenav {

struct Vocabulary {
  int content = 16;

  int bos() const { return content; }
  int eos() const { return content + 1; }
  int pad() const { return content + 2; }
  int size() const { return content + 3; }
  bool is_content(int t) const { return t >= 0 && t < content; }

  // Content tokens with specials removed.
  TokenSequence strip(const std::vector<int>& ids) const;
  nlohmann::json to_json() const;
};

struct SRHeadConfig {
  int d_model = 64;
  int enc_blocks = 2;
  int dec_blocks = 2;
  int num_heads = 4;
  int max_len = 16;  // emitted tokens including EOS
  int mel_bins = 80;
  int vocab_size = 16;

  void validate() const;
};

struct PretrainConfig {
  int steps = 1500;
  int batch_size = 8;
  double lr = 1e-3;
  int warmup_steps = 50;
  int utterances = 2000;
  int heldout = 200;
  int eval_every = 100;
  double stop_accuracy = 0.995;  // early stop once held-out accuracy reaches this
  double min_accuracy = 0.95;    // below this after `steps` -> pretraining failure
  std::uint64_t seed = 1234;
};

class SRHead {
 public:
  SRHead(ParamStore& store, const SRHeadConfig& cfg, std::mt19937_64& rng, const std::string& prefix = "srhead");

  const SRHeadConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::string& prefix() const { return prefix_; }

  // Built-in acoustic stem over linear-power mel: [4T, B] -> [2T, D_sr].
  Tensor stem(Graph& g, const Matrix& mel_power) const;
  // Encoder over memory [L, D_sr].
  Tensor encode(Graph& g, const Tensor& memory) const;
  // Decoder logits [len(prefix), V] given encoder output.
  Tensor logits(Graph& g, const Tensor& encoded, const std::vector<int>& prefix) const;

  // Teacher-forced mean cross-entropy of target (+EOS) given memory.
  Tensor nll_loss(Graph& g, const Tensor& memory, const TokenSequence& target) const;
  // Teacher-forced argmax accuracy over target + EOS positions.
  double token_accuracy(const Matrix& memory, const TokenSequence& target) const;

  Hypothesis decode(const Matrix& memory, int beam_size, int max_len = 0) const;
  TokenSequence transcribe(const Matrix& memory, int beam_size) const;

 private:
  SRHeadConfig cfg_;
  Vocabulary vocab_;
  std::string prefix_;
  nn::Linear stem_;
  std::vector<nn::EncoderBlock> enc_;
  nn::LayerNorm enc_ln_;
  Param* embed_ = nullptr;  // [V, D_sr]
  std::vector<nn::DecoderBlock> dec_;
  nn::LayerNorm dec_ln_;
  nn::Linear out_;
};

// Stacks mel rows 2t-1, 2t, 2t+1 (zero padded) of the log-mel: [4T,B] -> [2T,3B].
Matrix stem_context(const Matrix& mel_power);

struct PretrainResult {
  double heldout_accuracy = 0.0;
  int steps = 0;
  std::uint64_t checksum = 0;
};

// Trains every parameter under the head's prefix on a freshly generated
// clean corpus. Throws kPretrainFailure below min_accuracy.
PretrainResult pretrain_srhead(const SRHead& head, ParamStore& store, const CorpusConfig& corpus, const PretrainConfig& cfg,
                               const std::function<void(int, double, double)>& progress = {});

}  // namespace cogenav
