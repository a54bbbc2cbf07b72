#include "cogenav/avnet.hpp"

#include <cmath>

#include "cogenav/errors.hpp"

namespace cogenav {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kA: return "A";
    case Mode::kV: return "V";
    case Mode::kAV: return "AV";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "A" || s == "a") return Mode::kA;
  if (s == "V" || s == "v") return Mode::kV;
  if (s == "AV" || s == "av") return Mode::kAV;
  fail(ErrorCode::kConfig, "unknown mode: " + s);
}

void BackboneConfig::validate() const {
  require(feat_dim >= 1 && num_heads >= 1 && feat_dim % num_heads == 0, ErrorCode::kConfig,
          "feat_dim must be divisible by num_heads");
  require(num_blocks >= 0, ErrorCode::kConfig, "num_blocks must be >= 0");
  require(mel_bins >= 8, ErrorCode::kConfig, "mel_bins must be >= 8");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kConfig, "dropout must be in [0,1)");
}

Matrix log_mel(const Matrix& mel_power) {
  Matrix out = mel_power;
  for (double& v : out.data) v = 0.5 * (std::log(std::max(v, 0.0) + 1e-4) + 2.0);
  return out;
}

Tensor video_input(Graph& g, const LipClip& clip, bool requires_grad) {
  std::vector<double> v(clip.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * clip.pixels[i] - 1.0;
  Shape shape{clip.frames, clip.height, clip.width};
  return requires_grad ? g.input(std::move(v), std::move(shape)) : g.constant(std::move(v), std::move(shape));
}

Backbone::Conv Backbone::make_conv(ParamStore& store, const std::string& name, Shape shape, std::mt19937_64& rng) {
  Conv c;
  int fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const int out = shape[0];
  c.weight = &store.add(name + ".weight", std::move(shape));
  c.bias = &store.add(name + ".bias", {out});
  init_fan_in(*c.weight, fan_in, rng);
  return c;
}

Tensor Backbone::conv(Graph& g, const Conv& c, const Tensor& x, int stride, int pad) const {
  return ops::conv2d(x, g.param(*c.weight), g.param(*c.bias), stride, pad);
}

Backbone::Backbone(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg.feat_dim;
  const std::string a = prefix + ".audio", v = prefix + ".video", c = prefix + ".context";
  audio_conv1_ = make_conv(store, a + ".conv1", {cfg.audio_channels1, 1, 3, 3}, rng);
  audio_conv2_ = make_conv(store, a + ".conv2", {cfg.audio_channels2, cfg.audio_channels1, 3, 3}, rng);
  const int reduced_bins = (cfg.mel_bins + 3) / 4;
  audio_proj_ = nn::Linear(store, a + ".proj", cfg.audio_channels2 * reduced_bins, d, rng);

  video_stem_ = make_conv(store, v + ".stem", {cfg.video_stem_channels, 5, 3, 3}, rng);
  block1_conv1_ = make_conv(store, v + ".block1.conv1", {cfg.video_channels, cfg.video_stem_channels, 3, 3}, rng);
  block1_conv2_ = make_conv(store, v + ".block1.conv2", {cfg.video_channels, cfg.video_channels, 3, 3}, rng);
  block1_skip_ = make_conv(store, v + ".block1.skip", {cfg.video_channels, cfg.video_stem_channels, 1, 1}, rng);
  block2_conv1_ = make_conv(store, v + ".block2.conv1", {cfg.video_channels, cfg.video_channels, 3, 3}, rng);
  block2_conv2_ = make_conv(store, v + ".block2.conv2", {cfg.video_channels, cfg.video_channels, 3, 3}, rng);
  video_proj_ = nn::Linear(store, v + ".proj", cfg.video_channels, d, rng);

  fusion_ = nn::Linear(store, c + ".fusion", 2 * d, d, rng);
  for (int i = 0; i < cfg.num_blocks; ++i)
    blocks_.emplace_back(store, c + ".block" + std::to_string(i), d, cfg.num_heads, 4 * d, cfg.dropout, rng);
  ln_out_ = nn::LayerNorm(store, c + ".ln_out", d);
}

Tensor Backbone::encode_audio(Graph& g, const Tensor& log_mel) const {
  require(log_mel.rank() == 2, ErrorCode::kShape, "encode_audio: expected [4T, B] input");
  const int rows = log_mel.dim(0), bins = log_mel.dim(1);
  require(rows >= 4 && rows % 4 == 0, ErrorCode::kShape,
          "encode_audio: mel row count " + std::to_string(rows) + " is not a positive multiple of 4");
  require(bins == cfg_.mel_bins, ErrorCode::kShape, "encode_audio: expected " + std::to_string(cfg_.mel_bins) + " mel bins");
  Tensor x = ops::reshape(log_mel, {1, 1, rows, bins});
  x = ops::gelu(conv(g, audio_conv1_, x, 2, 1));
  x = ops::gelu(conv(g, audio_conv2_, x, 2, 1));  // [1, C, T, F]
  const int c = x.dim(1), t = x.dim(2), f = x.dim(3);
  x = ops::transpose01(ops::reshape(x, {c, t, f}));  // [T, C, F]
  x = ops::reshape(x, {t, c * f});
  return audio_proj_(g, x);
}

Tensor Backbone::encode_audio(Graph& g, const Matrix& mel_power) const {
  return encode_audio(g, as_tensor(g, log_mel(mel_power)));
}

Tensor Backbone::video_stem(Graph& g, const Tensor& frames) const {
  require(frames.rank() == 3 && frames.dim(0) >= 1, ErrorCode::kShape, "encode_video: expected [T, H, W] input with T >= 1");
  return ops::conv3d_stem(frames, g.param(*video_stem_.weight), g.param(*video_stem_.bias), 2, 1);
}

Tensor Backbone::encode_video(Graph& g, const Tensor& frames) const {
  Tensor x = ops::gelu(video_stem(g, frames));  // [T, C0, H/2, W/2]
  Tensor h = ops::gelu(conv(g, block1_conv1_, x, 2, 1));
  h = conv(g, block1_conv2_, h, 1, 1);
  x = ops::gelu(ops::add(h, conv(g, block1_skip_, x, 2, 0)));
  h = ops::gelu(conv(g, block2_conv1_, x, 1, 1));
  h = conv(g, block2_conv2_, h, 1, 1);
  x = ops::gelu(ops::add(h, x));
  return video_proj_(g, ops::mean_hw(x));
}

Tensor Backbone::encode_video(Graph& g, const LipClip& clip) const {
  return encode_video(g, video_input(g, clip));
}

Tensor Backbone::encode_context(Graph& g, const Tensor* f_a, const Tensor* f_v, Mode mode) const {
  Tensor x;
  switch (mode) {
    case Mode::kA:
      require(f_a && f_a->defined(), ErrorCode::kMode, "encode_context: mode A requires audio features");
      x = *f_a;
      break;
    case Mode::kV:
      require(f_v && f_v->defined(), ErrorCode::kMode, "encode_context: mode V requires visual features");
      x = *f_v;
      break;
    case Mode::kAV:
      require(f_a && f_a->defined() && f_v && f_v->defined(), ErrorCode::kMode,
              "encode_context: mode AV requires audio and visual features");
      require(f_a->dim(0) == f_v->dim(0), ErrorCode::kShape,
              "encode_context: audio T=" + std::to_string(f_a->dim(0)) + " vs visual T=" + std::to_string(f_v->dim(0)));
      x = fusion_(g, ops::concat_cols(*f_a, *f_v));
      break;
  }
  require(x.rank() == 2 && x.dim(1) == cfg_.feat_dim, ErrorCode::kShape, "encode_context: feature width mismatch");
  x = nn::add_positions(g, x);
  for (const auto& b : blocks_) x = b(g, x);
  return ln_out_(g, x);
}

FeatureSequence Backbone::features(const Matrix* mel_power, const LipClip* clip, Mode mode) const {
  Graph g(false);
  Tensor fa, fv;
  if (mode != Mode::kV) {
    require(mel_power != nullptr, ErrorCode::kMode, "features: audio required for this mode");
    fa = encode_audio(g, *mel_power);
  }
  if (mode != Mode::kA) {
    require(clip != nullptr, ErrorCode::kMode, "features: video required for this mode");
    fv = encode_video(g, *clip);
  }
  FeatureSequence out;
  out.values = to_matrix(encode_context(g, &fa, &fv, mode));
  return out;
}

}  // namespace cogenav
