#pragma once

// Small model and corpus shared by the training/eval tests.

#include "cogenav/model.hpp"
#include "cogenav/synthcorpus.hpp"

namespace cogenav::testing {

inline CorpusSpec tiny_corpus_spec(int train = 8, int val = 0, int test = 4) {
  CorpusSpec s;
  s.corpus.mel_bins = 16;
  s.corpus.min_tokens = 2;
  s.corpus.max_tokens = 4;
  s.splits = {train, val, test};
  s.num_speakers = 4;
  return s;
}

inline ModelConfig tiny_model_config() {
  ModelConfig m;
  m.backbone.feat_dim = 8;
  m.backbone.num_heads = 2;
  m.backbone.num_blocks = 1;
  m.backbone.mel_bins = 16;
  m.backbone.dropout = 0.0;
  m.backbone.audio_channels1 = 2;
  m.backbone.audio_channels2 = 3;
  m.backbone.video_stem_channels = 2;
  m.backbone.video_channels = 3;
  m.adapter.num_heads = 2;
  m.adapter.hidden_mult = 2.0;
  m.head.d_model = 8;
  m.head.enc_blocks = 1;
  m.head.dec_blocks = 1;
  m.head.num_heads = 2;
  m.head.mel_bins = 16;
  return m;
}

}  // namespace cogenav::testing
