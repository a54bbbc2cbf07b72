#include "cogenav/model.hpp"

#include <random>

#include "cogenav/checkpoint.hpp"
#include "cogenav/config.hpp"
#include "cogenav/errors.hpp"

namespace cogenav {

namespace {

AdapterConfig resolved_adapter(const ModelConfig& cfg) {
  AdapterConfig a = cfg.adapter;
  a.in_dim = cfg.backbone.feat_dim;
  a.out_dim = cfg.head.d_model;
  return a;
}

}  // namespace

CoGenAV::CoGenAV(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.adapter = resolved_adapter(cfg);
  require(cfg_.backbone.mel_bins == cfg_.head.mel_bins, ErrorCode::kConfig, "backbone and head mel_bins differ");
  std::mt19937_64 rb(mix_seed(init_seed, 1)), ra(mix_seed(init_seed, 2)), rh(mix_seed(init_seed, 3));
  backbone_ = std::make_unique<Backbone>(store_, cfg_.backbone, rb, kBackbonePrefix);
  adapter_ = std::make_unique<Adapter>(store_, cfg_.adapter, ra, kAdapterPrefix);
  head_ = std::make_unique<SRHead>(store_, cfg_.head, rh, kHeadPrefix);
}

void CoGenAV::add_cross_adapter(std::uint64_t seed) {
  require(!cross_, ErrorCode::kConfig, "cross adapter already present");
  AdapterConfig c = cfg_.adapter;
  c.attention_mode = AttentionMode::kCross;
  c.variant = AdapterVariant::kFull;
  std::mt19937_64 rng(mix_seed(seed, 4));
  cross_ = std::make_unique<Adapter>(store_, c, rng, kCrossPrefix);
}

Tensor CoGenAV::context(Graph& g, const Matrix* mel, const LipClip* clip, Mode mode) const {
  Tensor fa, fv;
  if (mode != Mode::kV) {
    require(mel != nullptr, ErrorCode::kMode, std::string("mode ") + mode_name(mode) + " requires audio");
    fa = backbone_->encode_audio(g, *mel);
  }
  if (mode != Mode::kA) {
    require(clip != nullptr, ErrorCode::kMode, std::string("mode ") + mode_name(mode) + " requires video");
    fv = backbone_->encode_video(g, *clip);
  }
  return backbone_->encode_context(g, &fa, &fv, mode);
}

Tensor CoGenAV::head_memory(Graph& g, const Tensor& context) const {
  return (*adapter_)(g, context);
}

Tensor CoGenAV::cross_memory(Graph& g, const Matrix& mel, const LipClip& clip) const {
  require(cross_ != nullptr, ErrorCode::kMissingArtifact, "model has no cross-attention adapter");
  Tensor query = head_->stem(g, mel);
  Tensor visual = context(g, nullptr, &clip, Mode::kV);
  return (*cross_)(g, visual, &query);
}

Tensor CoGenAV::gen_loss(Graph& g, const Matrix* mel, const LipClip* clip, Mode mode, const TokenSequence& tokens) const {
  return head_->nll_loss(g, head_memory(g, context(g, mel, clip, mode)), tokens);
}

Matrix CoGenAV::features(const Matrix* mel, const LipClip* clip, Mode mode) const {
  Graph g(false);
  return to_matrix(context(g, mel, clip, mode));
}

Matrix CoGenAV::memory(const Matrix* mel, const LipClip* clip, Mode mode) const {
  Graph g(false);
  return to_matrix(head_memory(g, context(g, mel, clip, mode)));
}

TokenSequence CoGenAV::transcribe(const Matrix* mel, const LipClip* clip, Mode mode, int beam) const {
  return head_->transcribe(memory(mel, clip, mode), beam);
}

nlohmann::json model_config_json(const ModelConfig& cfg) {
  return {{"backbone", to_json(cfg.backbone)}, {"adapter", to_json(cfg.adapter)}, {"srhead", to_json(cfg.head)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("backbone")) cfg.backbone = backbone_config_from_json(j["backbone"]);
  if (j.contains("adapter")) cfg.adapter = adapter_config_from_json(j["adapter"]);
  if (j.contains("srhead")) cfg.head = srhead_config_from_json(j["srhead"]);
  return cfg;
}

void save_model(const std::filesystem::path& path, const CoGenAV& model, nlohmann::json meta) {
  meta["head_checksum"] = checksum_hex(model.store().checksum(kHeadPrefix));
  meta["vocabulary"] = model.head().vocab().to_json();
  meta["checksum"] = checksum_hex(model.store().checksum());
  save_checkpoint(path, model.store(), model_config_json(model.config()), meta);
}

std::unique_ptr<CoGenAV> load_model(const std::filesystem::path& path, nlohmann::json* meta) {
  Checkpoint ck = load_checkpoint(path);
  auto model = std::make_unique<CoGenAV>(model_config_from_json(ck.config), 0);
  for (const auto& [name, _] : ck.tensors)
    if (has_prefix(name, std::string(kCrossPrefix) + ".")) {
      model->add_cross_adapter(0);
      break;
    }
  ck.apply(model->store());
  if (meta) *meta = ck.meta;
  return model;
}

std::uint64_t load_head(CoGenAV& model, const std::filesystem::path& head_checkpoint) {
  Checkpoint ck = load_checkpoint(head_checkpoint);
  require(ck.meta.contains("head_checksum"), ErrorCode::kRefused,
          "head checkpoint " + head_checkpoint.string() + " has no checksum record");
  ck.apply(model.store(), std::string(kHeadPrefix) + ".");
  const std::uint64_t sum = model.store().checksum(kHeadPrefix);
  require(checksum_hex(sum) == ck.meta["head_checksum"].get<std::string>(), ErrorCode::kRefused,
          "head checksum mismatch for " + head_checkpoint.string());
  model.store().set_trainable(kHeadPrefix, false);
  return sum;
}

}  // namespace cogenav
