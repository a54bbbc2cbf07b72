#include "cogenav/srhead.hpp"

#include <algorithm>
#include <cmath>

#include "cogenav/avnet.hpp"
#include "cogenav/errors.hpp"
#include "cogenav/optim.hpp"

namespace cogenav {

TokenSequence Vocabulary::strip(const std::vector<int>& ids) const {
  TokenSequence out;
  for (int t : ids) {
    if (t == eos()) break;
    if (is_content(t)) out.push_back(t);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"content", content}, {"bos", bos()}, {"eos", eos()}, {"pad", pad()}, {"size", size()}};
}

void SRHeadConfig::validate() const {
  require(d_model >= 1 && num_heads >= 1 && d_model % num_heads == 0, ErrorCode::kConfig,
          "srhead d_model must be divisible by num_heads");
  require(enc_blocks >= 0 && dec_blocks >= 1, ErrorCode::kConfig, "srhead needs at least one decoder block");
  require(max_len >= 2, ErrorCode::kConfig, "srhead max_len must be >= 2");
  require(vocab_size >= 2, ErrorCode::kConfig, "srhead vocab_size must be >= 2");
}

Matrix stem_context(const Matrix& mel_power) {
  require(mel_power.rows >= 2 && mel_power.rows % 2 == 0, ErrorCode::kShape, "srhead stem: mel rows must be even");
  const Matrix lm = log_mel(mel_power);
  const int out_rows = lm.rows / 2, b = lm.cols;
  Matrix ctx(out_rows, 3 * b);
  for (int t = 0; t < out_rows; ++t)
    for (int k = 0; k < 3; ++k) {
      const int src = 2 * t - 1 + k;
      if (src < 0 || src >= lm.rows) continue;
      std::copy(lm.row(src).begin(), lm.row(src).end(), ctx.row(t).begin() + k * b);
    }
  return ctx;
}

SRHead::SRHead(ParamStore& store, const SRHeadConfig& cfg, std::mt19937_64& rng, const std::string& prefix)
    : cfg_(cfg), prefix_(prefix) {
  cfg_.validate();
  vocab_.content = cfg.vocab_size;
  const int d = cfg.d_model;
  stem_ = nn::Linear(store, prefix + ".stem", 3 * cfg.mel_bins, d, rng);
  for (int i = 0; i < cfg.enc_blocks; ++i)
    enc_.emplace_back(store, prefix + ".encoder.block" + std::to_string(i), d, cfg.num_heads, 4 * d, 0.0, rng);
  enc_ln_ = nn::LayerNorm(store, prefix + ".encoder.ln_out", d);
  embed_ = &store.add(prefix + ".decoder.embed", {vocab_.size(), d});
  init_uniform(*embed_, 1.0, rng);
  for (int i = 0; i < cfg.dec_blocks; ++i)
    dec_.emplace_back(store, prefix + ".decoder.block" + std::to_string(i), d, cfg.num_heads, 4 * d, rng);
  dec_ln_ = nn::LayerNorm(store, prefix + ".decoder.ln_out", d);
  out_ = nn::Linear(store, prefix + ".decoder.out", d, vocab_.size(), rng);
}

Tensor SRHead::stem(Graph& g, const Matrix& mel_power) const {
  require(mel_power.cols == cfg_.mel_bins, ErrorCode::kShape, "srhead stem: mel bin count mismatch");
  return ops::gelu(stem_(g, as_tensor(g, stem_context(mel_power))));
}

Tensor SRHead::encode(Graph& g, const Tensor& memory) const {
  require(memory.rank() == 2 && memory.dim(0) >= 1 && memory.dim(1) == cfg_.d_model, ErrorCode::kShape,
          "srhead: memory must be [L, " + std::to_string(cfg_.d_model) + "]");
  Tensor x = nn::add_positions(g, memory);
  for (const auto& b : enc_) x = b(g, x);
  return enc_ln_(g, x);
}

Tensor SRHead::logits(Graph& g, const Tensor& encoded, const std::vector<int>& prefix) const {
  Tensor x = nn::add_positions(g, ops::embedding(g.param(*embed_), prefix));
  for (const auto& b : dec_) x = b(g, x, encoded);
  return out_(g, dec_ln_(g, x));
}

Tensor SRHead::nll_loss(Graph& g, const Tensor& memory, const TokenSequence& target) const {
  require(!target.empty(), ErrorCode::kBatch, "nll_loss: empty target");
  require(static_cast<int>(target.size()) + 1 <= cfg_.max_len, ErrorCode::kShape,
          "nll_loss: target longer than max_len");
  std::vector<int> input{vocab_.bos()};
  input.insert(input.end(), target.begin(), target.end());
  std::vector<int> labels(target.begin(), target.end());
  labels.push_back(vocab_.eos());
  return ops::cross_entropy(logits(g, encode(g, memory), input), labels, vocab_.pad());
}

double SRHead::token_accuracy(const Matrix& memory, const TokenSequence& target) const {
  Graph g(false);
  std::vector<int> input{vocab_.bos()};
  input.insert(input.end(), target.begin(), target.end());
  std::vector<int> labels(target.begin(), target.end());
  labels.push_back(vocab_.eos());
  Tensor lg = logits(g, encode(g, as_tensor(g, memory)), input);
  const int v = lg.dim(1);
  int hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = lg.value().data() + i * v;
    if (std::max_element(row, row + v) - row == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Hypothesis SRHead::decode(const Matrix& memory, int beam_size, int max_len) const {
  Graph g(false);
  const Tensor encoded = encode(g, as_tensor(g, memory));
  StepScorer scorer = [&](const std::vector<int>& prefix) {
    Graph step(false);
    // Reuse the already encoded memory as a constant in the step graph.
    Tensor enc = step.constant(encoded.value(), encoded.shape());
    Tensor lg = logits(step, enc, prefix);
    const int v = lg.dim(1);
    const double* row = lg.value().data() + static_cast<std::size_t>(lg.dim(0) - 1) * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    std::vector<double> lp(static_cast<std::size_t>(v));
    for (int j = 0; j < v; ++j) lp[j] = row[j] - lz;
    return lp;
  };
  DecodeSpec spec{vocab_.size(), vocab_.bos(), vocab_.eos(), beam_size, max_len > 0 ? max_len : cfg_.max_len};
  return beam_search(scorer, spec);
}

TokenSequence SRHead::transcribe(const Matrix& memory, int beam_size) const {
  return vocab_.strip(decode(memory, beam_size).tokens);
}

PretrainResult pretrain_srhead(const SRHead& head, ParamStore& store, const CorpusConfig& corpus, const PretrainConfig& cfg,
                               const std::function<void(int, double, double)>& progress) {
  corpus.validate();
  require(cfg.utterances > cfg.heldout && cfg.heldout >= 1, ErrorCode::kConfig,
          "pretrain: utterances must exceed heldout count");
  require(cfg.steps >= 1 && cfg.batch_size >= 1, ErrorCode::kConfig, "pretrain: steps and batch_size must be >= 1");
  std::vector<UtteranceSample> data(static_cast<std::size_t>(cfg.utterances));
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < cfg.utterances; ++i)
    data[i] = gen_utterance(corpus, i % 8, mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
  const int n_train = cfg.utterances - cfg.heldout;

  store.set_all_trainable(false);
  store.set_trainable(head.prefix(), true);
  Adam adam(store);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(0, n_train - 1);

  auto heldout_accuracy = [&] {
    std::vector<double> acc(static_cast<std::size_t>(cfg.heldout));
#pragma omp parallel for schedule(dynamic, 4)
    for (int i = 0; i < cfg.heldout; ++i) {
      const auto& s = data[n_train + i];
      Graph g(false);
      acc[i] = head.token_accuracy(to_matrix(head.stem(g, s.mel)), s.tokens);
    }
    double total = 0.0;
    for (double a : acc) total += a;
    return total / cfg.heldout;
  };

  PretrainResult result;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<int> batch(static_cast<std::size_t>(cfg.batch_size));
    for (int& b : batch) b = pick(rng);
    GradBuffer grads;
    const auto losses = parallel_items(cfg.batch_size, [&](int i, GradBuffer& buf) {
      const auto& s = data[batch[i]];
      Graph g(true, true);
      Tensor loss = head.nll_loss(g, head.stem(g, s.mel), s.tokens);
      g.backward(loss);
      g.accumulate_param_grads(buf, 1.0 / cfg.batch_size);
      return loss.item();
    }, grads);
    double loss = 0.0;
    for (double l : losses) loss += l / cfg.batch_size;
    require(std::isfinite(loss), ErrorCode::kNonFinite, "pretrain: non-finite loss at step " + std::to_string(step));
    adam.step(store, grads, warmup_lr(cfg.lr, step, cfg.warmup_steps));
    result.steps = step;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      result.heldout_accuracy = heldout_accuracy();
      if (progress) progress(step, loss, result.heldout_accuracy);
      if (result.heldout_accuracy >= cfg.stop_accuracy) break;
    }
  }
  store.set_trainable(head.prefix(), false);
  require(result.heldout_accuracy >= cfg.min_accuracy, ErrorCode::kPretrainFailure,
          "SR head reached held-out token accuracy " + std::to_string(result.heldout_accuracy) + " < " +
              std::to_string(cfg.min_accuracy) + " after " + std::to_string(result.steps) + " steps");
  result.checksum = store.checksum(head.prefix());
  return result;
}

}  // namespace cogenav
