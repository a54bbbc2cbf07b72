#pragma once

// Autoregressive decoding over an abstract next-token scorer.

#include <functional>
#include <vector>

namespace cogenav {

// Log-probabilities over the whole vocabulary for the token that follows
// `prefix` (prefix starts with BOS).
using StepScorer = std::function<std::vector<double>(const std::vector<int>& prefix)>;

struct DecodeSpec {
  int vocab_size = 0;
  int bos = 0;
  int eos = 0;
  int beam_size = 1;
  int max_len = 16;  // emitted tokens, EOS included
};

struct Hypothesis {
  std::vector<int> tokens;  // emitted tokens; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;

  // Length-normalized score: log_prob / emitted length.
  double score() const;
};

// Length-normalized beam search. Each step keeps the beam_size best
// expansions by cumulative log-probability (ties: earlier parent, then lower
// token id); hypotheses leave the beam at EOS or max_len. The result is the
// best finished hypothesis by score (ties: lexicographically smaller).
Hypothesis beam_search(const StepScorer& scorer, const DecodeSpec& spec);
Hypothesis greedy_search(const StepScorer& scorer, const DecodeSpec& spec);

}  // namespace cogenav
