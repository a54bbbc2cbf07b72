#include "cogenav/config.hpp"

#include <fstream>
#include <set>

#include "cogenav/errors.hpp"

namespace cogenav {

std::string_view error_tag(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "CONFIG";
    case ErrorCode::kShape: return "SHAPE";
    case ErrorCode::kMode: return "MODE";
    case ErrorCode::kDegenerateInput: return "DEGENERATE_INPUT";
    case ErrorCode::kPairConstruction: return "PAIR_CONSTRUCTION";
    case ErrorCode::kBatch: return "BATCH";
    case ErrorCode::kUndefinedMetric: return "UNDEFINED_METRIC";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kFormat: return "FORMAT";
    case ErrorCode::kPretrainFailure: return "PRETRAIN_FAILURE";
    case ErrorCode::kNonFinite: return "NON_FINITE";
    case ErrorCode::kMissingArtifact: return "MISSING_ARTIFACT";
    case ErrorCode::kRefused: return "REFUSED";
  }
  return "UNKNOWN";
}

namespace {

using nlohmann::json;

// Reads j[key] into `out` if present; records the key as known.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    require(j.is_object(), ErrorCode::kConfig, "config section '" + section_ + "' must be an object");
  }

  template <typename T>
  Reader& get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, "config " + section_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const json* section(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      require(known_.count(k) > 0, ErrorCode::kConfig, "unknown config key: " + section_ + "." + k);
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> known_;
};

}  // namespace

void EvalSettings::validate() const {
  require(beam >= 1, ErrorCode::kConfig, "eval.beam must be >= 1");
  require(band >= 0, ErrorCode::kConfig, "eval.band must be >= 0");
  require(max_utterances >= 0, ErrorCode::kConfig, "eval.max_utterances must be >= 0");
}

void RunConfig::validate() const {
  corpus.corpus.validate();
  model.backbone.validate();
  model.head.validate();
  train.validate();
  eval.validate();
  require(model.backbone.mel_bins == corpus.corpus.mel_bins && model.head.mel_bins == corpus.corpus.mel_bins,
          ErrorCode::kConfig, "mel_bins must agree across corpus, backbone and srhead");
  require(model.head.vocab_size == corpus.corpus.vocab_size, ErrorCode::kConfig,
          "srhead.vocab_size must equal corpus.vocab_size");
  require(model.head.max_len >= corpus.corpus.max_tokens + 1, ErrorCode::kConfig,
          "srhead.max_len must cover max_tokens + EOS");
}

json to_json(const CorpusSpec& s) {
  const auto& c = s.corpus;
  return {{"vocab_size", c.vocab_size},     {"frames_per_token", c.frames_per_token},
          {"mel_bins", c.mel_bins},         {"image_size", c.image_size},
          {"min_tokens", c.min_tokens},     {"max_tokens", c.max_tokens},
          {"seed", c.seed},                 {"splits", {{"train", s.splits.train}, {"val", s.splits.val}, {"test", s.splits.test}}},
          {"num_speakers", s.num_speakers}, {"disjoint_speakers", s.disjoint_speakers}};
}

CorpusSpec corpus_spec_from_json(const json& j, CorpusSpec s) {
  Reader r(j, "corpus");
  r.get("vocab_size", s.corpus.vocab_size)
      .get("frames_per_token", s.corpus.frames_per_token)
      .get("mel_bins", s.corpus.mel_bins)
      .get("image_size", s.corpus.image_size)
      .get("min_tokens", s.corpus.min_tokens)
      .get("max_tokens", s.corpus.max_tokens)
      .get("seed", s.corpus.seed)
      .get("num_speakers", s.num_speakers)
      .get("disjoint_speakers", s.disjoint_speakers);
  if (const json* sp = r.section("splits")) {
    Reader rs(*sp, "corpus.splits");
    rs.get("train", s.splits.train).get("val", s.splits.val).get("test", s.splits.test);
    rs.finish();
  }
  r.finish();
  return s;
}

json to_json(const BackboneConfig& c) {
  return {{"feat_dim", c.feat_dim},
          {"num_blocks", c.num_blocks},
          {"num_heads", c.num_heads},
          {"mel_bins", c.mel_bins},
          {"dropout", c.dropout},
          {"audio_channels1", c.audio_channels1},
          {"audio_channels2", c.audio_channels2},
          {"video_stem_channels", c.video_stem_channels},
          {"video_channels", c.video_channels}};
}

BackboneConfig backbone_config_from_json(const json& j, BackboneConfig c) {
  Reader r(j, "backbone");
  r.get("feat_dim", c.feat_dim)
      .get("num_blocks", c.num_blocks)
      .get("num_heads", c.num_heads)
      .get("mel_bins", c.mel_bins)
      .get("dropout", c.dropout)
      .get("audio_channels1", c.audio_channels1)
      .get("audio_channels2", c.audio_channels2)
      .get("video_stem_channels", c.video_stem_channels)
      .get("video_channels", c.video_channels);
  r.finish();
  return c;
}

json to_json(const AdapterConfig& c) {
  return {{"in_dim", c.in_dim},
          {"out_dim", c.out_dim},
          {"num_heads", c.num_heads},
          {"hidden_mult", c.hidden_mult},
          {"attention_mode", c.attention_mode == AttentionMode::kCross ? "cross" : "self"},
          {"variant", variant_name(c.variant)}};
}

AdapterConfig adapter_config_from_json(const json& j, AdapterConfig c) {
  Reader r(j, "adapter");
  std::string mode = c.attention_mode == AttentionMode::kCross ? "cross" : "self";
  std::string variant = variant_name(c.variant);
  r.get("in_dim", c.in_dim)
      .get("out_dim", c.out_dim)
      .get("num_heads", c.num_heads)
      .get("hidden_mult", c.hidden_mult)
      .get("attention_mode", mode)
      .get("variant", variant);
  r.finish();
  require(mode == "self" || mode == "cross", ErrorCode::kConfig, "adapter.attention_mode must be self or cross");
  c.attention_mode = mode == "cross" ? AttentionMode::kCross : AttentionMode::kSelf;
  c.variant = parse_variant(variant);
  return c;
}

json to_json(const SRHeadConfig& c) {
  return {{"d_model", c.d_model},   {"enc_blocks", c.enc_blocks}, {"dec_blocks", c.dec_blocks}, {"num_heads", c.num_heads},
          {"max_len", c.max_len},   {"mel_bins", c.mel_bins},     {"vocab_size", c.vocab_size}};
}

SRHeadConfig srhead_config_from_json(const json& j, SRHeadConfig c) {
  Reader r(j, "srhead");
  r.get("d_model", c.d_model)
      .get("enc_blocks", c.enc_blocks)
      .get("dec_blocks", c.dec_blocks)
      .get("num_heads", c.num_heads)
      .get("max_len", c.max_len)
      .get("mel_bins", c.mel_bins)
      .get("vocab_size", c.vocab_size);
  r.finish();
  return c;
}

json to_json(const PretrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"utterances", c.utterances},
          {"heldout", c.heldout},
          {"eval_every", c.eval_every},
          {"stop_accuracy", c.stop_accuracy},
          {"min_accuracy", c.min_accuracy},
          {"seed", c.seed}};
}

PretrainConfig pretrain_config_from_json(const json& j, PretrainConfig c) {
  Reader r(j, "pretrain");
  r.get("steps", c.steps)
      .get("batch_size", c.batch_size)
      .get("lr", c.lr)
      .get("warmup_steps", c.warmup_steps)
      .get("utterances", c.utterances)
      .get("heldout", c.heldout)
      .get("eval_every", c.eval_every)
      .get("stop_accuracy", c.stop_accuracy)
      .get("min_accuracy", c.min_accuracy)
      .get("seed", c.seed);
  r.finish();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"modality_probs", c.modality_probs},
          {"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"batch_size", c.batch_size},
          {"grad_accum", c.grad_accum},
          {"seed", c.seed},
          {"snr_range_db", c.snr_range_db},
          {"negative_fraction", c.negative_fraction},
          {"steps", c.steps},
          {"phase1_fraction", c.phase1_fraction},
          {"min_shift", c.min_shift},
          {"grad_clip", c.grad_clip},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  Reader r(j, "train");
  r.get("lambda", c.lambda)
      .get("modality_probs", c.modality_probs)
      .get("lr", c.lr)
      .get("warmup_steps", c.warmup_steps)
      .get("batch_size", c.batch_size)
      .get("grad_accum", c.grad_accum)
      .get("seed", c.seed)
      .get("snr_range_db", c.snr_range_db)
      .get("negative_fraction", c.negative_fraction)
      .get("steps", c.steps)
      .get("phase1_fraction", c.phase1_fraction)
      .get("min_shift", c.min_shift)
      .get("grad_clip", c.grad_clip)
      .get("checkpoint_every", c.checkpoint_every);
  r.finish();
  return c;
}

json to_json(const EvalSettings& c) {
  return {{"beam", c.beam}, {"snr_db", c.snr_db}, {"max_utterances", c.max_utterances}, {"band", c.band},
          {"cross_steps", c.cross_steps}};
}

EvalSettings eval_settings_from_json(const json& j, EvalSettings c) {
  Reader r(j, "eval");
  r.get("beam", c.beam)
      .get("snr_db", c.snr_db)
      .get("max_utterances", c.max_utterances)
      .get("band", c.band)
      .get("cross_steps", c.cross_steps);
  r.finish();
  return c;
}

json to_json(const RunConfig& c) {
  json j = model_config_json(c.model);
  j["corpus"] = to_json(c.corpus);
  j["pretrain"] = to_json(c.pretrain);
  j["train"] = to_json(c.train);
  j["eval"] = to_json(c.eval);
  return j;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  Reader r(j, "config");
  if (const json* s = r.section("corpus")) c.corpus = corpus_spec_from_json(*s, c.corpus);
  if (const json* s = r.section("backbone")) c.model.backbone = backbone_config_from_json(*s, c.model.backbone);
  if (const json* s = r.section("adapter")) c.model.adapter = adapter_config_from_json(*s, c.model.adapter);
  if (const json* s = r.section("srhead")) c.model.head = srhead_config_from_json(*s, c.model.head);
  if (const json* s = r.section("pretrain")) c.pretrain = pretrain_config_from_json(*s, c.pretrain);
  if (const json* s = r.section("train")) c.train = train_config_from_json(*s, c.train);
  if (const json* s = r.section("eval")) c.eval = eval_settings_from_json(*s, c.eval);
  r.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kMissingArtifact, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace cogenav
