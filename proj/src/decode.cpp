#include "cogenav/decode.hpp"

#include <algorithm>

#include "cogenav/errors.hpp"

namespace cogenav {

double Hypothesis::score() const {
  return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size());
}

namespace {

struct Candidate {
  std::size_t parent;
  int token;
  double log_prob;
};

bool better_final(const Hypothesis& a, const Hypothesis& b) {
  if (a.score() != b.score()) return a.score() > b.score();
  return a.tokens < b.tokens;
}

void check_spec(const DecodeSpec& spec) {
  require(spec.beam_size >= 1, ErrorCode::kConfig, "decode: beam size must be >= 1");
  require(spec.max_len >= 1, ErrorCode::kConfig, "decode: max_len must be >= 1");
  require(spec.vocab_size >= 1, ErrorCode::kConfig, "decode: empty vocabulary");
}

}  // namespace

Hypothesis beam_search(const StepScorer& scorer, const DecodeSpec& spec) {
  check_spec(spec);
  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> done;
  std::vector<int> prefix;
  for (int step = 0; step < spec.max_len && !alive.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      prefix.assign(1, spec.bos);
      prefix.insert(prefix.end(), alive[h].tokens.begin(), alive[h].tokens.end());
      const std::vector<double> lp = scorer(prefix);
      require(static_cast<int>(lp.size()) == spec.vocab_size, ErrorCode::kShape, "decode: scorer returned wrong width");
      for (int v = 0; v < spec.vocab_size; ++v) cands.push_back({h, v, alive[h].log_prob + lp[v]});
    }
    const std::size_t keep = std::min<std::size_t>(spec.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = alive[cands[i].parent];
      h.tokens.push_back(cands[i].token);
      h.log_prob = cands[i].log_prob;
      h.finished = cands[i].token == spec.eos;
      if (h.finished || static_cast<int>(h.tokens.size()) == spec.max_len)
        done.push_back(std::move(h));
      else
        next.push_back(std::move(h));
    }
    alive = std::move(next);
  }
  return *std::min_element(done.begin(), done.end(), better_final);
}

Hypothesis greedy_search(const StepScorer& scorer, const DecodeSpec& spec) {
  DecodeSpec s = spec;
  s.beam_size = 1;
  return beam_search(scorer, s);
}

}  // namespace cogenav
