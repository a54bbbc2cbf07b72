#include "cogenav/synthcorpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cogenav/array_io.hpp"
#include "cogenav/config.hpp"
#include "cogenav/errors.hpp"

namespace cogenav {

namespace {

double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int audio_rows_per_token(const CorpusConfig& cfg) { return 4 * cfg.frames_per_token; }

// Relative amplitude/aperture of video sub-frame j within a token.
double phase_level(const CorpusConfig& cfg, int j, double depth) {
  if (cfg.frames_per_token == 1) return 1.0;
  return 1.0 - depth * static_cast<double>(j) / (cfg.frames_per_token - 1);
}

std::pair<int, int> token_band(const CorpusConfig& cfg, int token) {
  const int lo = token * cfg.mel_bins / cfg.vocab_size;
  const int hi = (token + 1) * cfg.mel_bins / cfg.vocab_size;
  return {lo, hi};
}

// Mel rows for one token: [4*frames_per_token, mel_bins].
Matrix mel_segment(const CorpusConfig& cfg, const SpeakerStyle& style, int token) {
  Matrix seg(audio_rows_per_token(cfg), cfg.mel_bins);
  const auto [lo, hi] = token_band(cfg, token);
  for (int r = 0; r < seg.rows; ++r) {
    const double amp = phase_level(cfg, r / 4, 0.45);
    for (int b = 0; b < cfg.mel_bins; ++b) {
      double p = style.floor * (1.0 + style.tilt * (static_cast<double>(b) / cfg.mel_bins - 0.5));
      if (b >= lo && b < hi) p += style.gain * amp;
      seg(r, b) = round_f32(p);
    }
  }
  return seg;
}

std::pair<double, double> mouth_axes(const CorpusConfig& cfg, int token) {
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.vocab_size))));
  const int rows = (cfg.vocab_size + cols - 1) / cols;
  const int c = token % cols, r = token / cols;
  const double fc = cols > 1 ? static_cast<double>(c) / (cols - 1) : 0.5;
  const double fr = rows > 1 ? static_cast<double>(r) / (rows - 1) : 0.5;
  const double s = cfg.image_size;
  return {s * (0.16 + 0.26 * fc), s * (0.05 + 0.23 * fr)};
}

// Writes one mouth image for (token, sub-frame j) into `out` (H*W values).
void render_mouth(const CorpusConfig& cfg, const SpeakerStyle& style, int token, int j, double* out) {
  const auto [a0, b0] = mouth_axes(cfg, token);
  const double a = a0 * style.mouth_scale;
  const double b = std::max(0.3, b0 * style.mouth_scale * phase_level(cfg, j, 0.35));
  const double cx = 0.5 * (cfg.image_size - 1) + style.dx;
  const double cy = 0.5 * (cfg.image_size - 1) + style.dy;
  const double skin = 0.55 + style.brightness;
  const double dark = 0.1 + 0.5 * style.brightness;
  for (int y = 0; y < cfg.image_size; ++y)
    for (int x = 0; x < cfg.image_size; ++x) {
      const double u = (x - cx) / a, v = (y - cy) / b;
      const double r = std::sqrt(u * u + v * v);
      const double alpha = std::clamp((1.15 - r) / 0.3, 0.0, 1.0);
      out[y * cfg.image_size + x] = round_f32(std::clamp(skin + (dark - skin) * alpha, 0.0, 1.0));
    }
}

std::vector<double> video_segment(const CorpusConfig& cfg, const SpeakerStyle& style, int token) {
  const std::size_t fs = static_cast<std::size_t>(cfg.image_size) * cfg.image_size;
  std::vector<double> seg(fs * cfg.frames_per_token);
  for (int j = 0; j < cfg.frames_per_token; ++j) render_mouth(cfg, style, token, j, seg.data() + j * fs);
  return seg;
}

double sq_dist(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double mean_of(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v;
  return m.data.empty() ? 0.0 : s / static_cast<double>(m.data.size());
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void CorpusConfig::validate() const {
  require(vocab_size >= 2, ErrorCode::kConfig, "vocab_size must be >= 2");
  require(frames_per_token >= 1, ErrorCode::kConfig, "frames_per_token must be >= 1");
  require(mel_bins >= 8, ErrorCode::kConfig, "mel_bins must be >= 8");
  require(mel_bins >= vocab_size, ErrorCode::kConfig, "mel_bins must be >= vocab_size (one band per token)");
  require(image_size >= 8, ErrorCode::kConfig, "image_size must be >= 8");
  require(min_tokens >= 1 && max_tokens >= min_tokens, ErrorCode::kConfig, "utterance_len_range must satisfy 1 <= min <= max");
}

SpeakerStyle speaker_style(const CorpusConfig& cfg, int speaker_id) {
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, 0x5157), static_cast<std::uint64_t>(speaker_id)));
  SpeakerStyle s;
  s.gain = uniform(rng, 0.8, 1.25);
  s.floor = uniform(rng, 0.015, 0.03);
  s.tilt = uniform(rng, -0.2, 0.2);
  s.brightness = uniform(rng, -0.12, 0.12);
  s.mouth_scale = uniform(rng, 0.9, 1.1);
  s.dx = uniform(rng, -0.8, 0.8);
  s.dy = uniform(rng, -0.8, 0.8);
  return s;
}

UtteranceSample render_utterance(const CorpusConfig& cfg, const TokenSequence& tokens, int speaker_id) {
  cfg.validate();
  require(speaker_id >= 0, ErrorCode::kConfig, "speaker_id must be >= 0");
  require(!tokens.empty(), ErrorCode::kConfig, "cannot render an empty transcript");
  const SpeakerStyle style = speaker_style(cfg, speaker_id);
  const int n = static_cast<int>(tokens.size());
  const int frames = n * cfg.frames_per_token;
  UtteranceSample s;
  s.tokens = tokens;
  s.speaker_id = speaker_id;
  s.mel = Matrix(4 * frames, cfg.mel_bins);
  s.video.frames = frames;
  s.video.height = s.video.width = cfg.image_size;
  s.video.pixels.resize(static_cast<std::size_t>(frames) * s.video.frame_size());
  const int arows = audio_rows_per_token(cfg);
  for (int i = 0; i < n; ++i) {
    require(tokens[i] >= 0 && tokens[i] < cfg.vocab_size, ErrorCode::kConfig, "token id out of range");
    const Matrix seg = mel_segment(cfg, style, tokens[i]);
    std::copy(seg.data.begin(), seg.data.end(), s.mel.data.begin() + static_cast<std::ptrdiff_t>(i) * arows * cfg.mel_bins);
    const auto vid = video_segment(cfg, style, tokens[i]);
    std::copy(vid.begin(), vid.end(), s.video.pixels.begin() + static_cast<std::ptrdiff_t>(i * cfg.frames_per_token * s.video.frame_size()));
  }
  return s;
}

UtteranceSample gen_utterance(const CorpusConfig& cfg, int speaker_id, std::uint64_t rng_state) {
  cfg.validate();
  require(speaker_id >= 0, ErrorCode::kConfig, "speaker_id must be >= 0");
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(speaker_id)), rng_state));
  const int len = std::uniform_int_distribution<int>(cfg.min_tokens, cfg.max_tokens)(rng);
  TokenSequence tokens(len);
  std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
  for (int& t : tokens) t = tok(rng);
  return render_utterance(cfg, tokens, speaker_id);
}

TokenSequence decode_mel_tokens(const CorpusConfig& cfg, const Matrix& mel, int speaker_id) {
  cfg.validate();
  const int arows = audio_rows_per_token(cfg);
  require(mel.cols == cfg.mel_bins && mel.rows % arows == 0, ErrorCode::kShape, "decode_mel_tokens: bad spectrogram shape");
  const SpeakerStyle style = speaker_style(cfg, speaker_id);
  std::vector<Matrix> templates;
  for (int k = 0; k < cfg.vocab_size; ++k) templates.push_back(mel_segment(cfg, style, k));
  TokenSequence out;
  const std::size_t seg_size = static_cast<std::size_t>(arows) * cfg.mel_bins;
  for (int i = 0; i < mel.rows / arows; ++i) {
    const double* seg = mel.data.data() + i * seg_size;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.vocab_size; ++k) {
      const double d = sq_dist(seg, templates[k].data.data(), seg_size);
      if (d < best_d) best_d = d, best = k;
    }
    out.push_back(best);
  }
  return out;
}

TokenSequence decode_video_tokens(const CorpusConfig& cfg, const LipClip& video, int speaker_id) {
  cfg.validate();
  require(video.height == cfg.image_size && video.width == cfg.image_size && video.frames % cfg.frames_per_token == 0,
          ErrorCode::kShape, "decode_video_tokens: bad clip shape");
  const SpeakerStyle style = speaker_style(cfg, speaker_id);
  std::vector<std::vector<double>> templates;
  for (int k = 0; k < cfg.vocab_size; ++k) templates.push_back(video_segment(cfg, style, k));
  const std::size_t seg_size = video.frame_size() * cfg.frames_per_token;
  TokenSequence out;
  for (int i = 0; i < video.frames / cfg.frames_per_token; ++i) {
    const double* seg = video.pixels.data() + i * seg_size;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.vocab_size; ++k) {
      const double d = sq_dist(seg, templates[k].data(), seg_size);
      if (d < best_d) best_d = d, best = k;
    }
    out.push_back(best);
  }
  return out;
}

Matrix mix_noise(const Matrix& clean, const Matrix& noise, double snr_db) {
  require(clean.rows == noise.rows && clean.cols == noise.cols, ErrorCode::kShape, "mix_noise: clean and noise shapes differ");
  if (std::isinf(snr_db) && snr_db > 0) return clean;
  const double e_clean = mean_of(clean);
  const double e_noise = mean_of(noise);
  require(e_clean > 0.0, ErrorCode::kDegenerateInput, "mix_noise: clean signal has zero energy");
  require(e_noise > 0.0, ErrorCode::kDegenerateInput, "mix_noise: noise has zero energy at finite SNR");
  const double gain = e_clean / (e_noise * std::pow(10.0, snr_db / 10.0));
  Matrix out = clean;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += gain * noise.data[i];
  return out;
}

Matrix fit_noise(const Matrix& noise, int rows) {
  require(noise.rows >= 1 && rows >= 1, ErrorCode::kShape, "fit_noise: empty input");
  Matrix out(rows, noise.cols);
  for (int r = 0; r < rows; ++r) {
    auto src = noise.row(r % noise.rows);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

double measure_snr(const Matrix& clean, const Matrix& mixed) {
  require(clean.rows == mixed.rows && clean.cols == mixed.cols, ErrorCode::kShape, "measure_snr: shape mismatch");
  double noise = 0.0;
  for (std::size_t i = 0; i < clean.data.size(); ++i) noise += mixed.data[i] - clean.data[i];
  noise /= static_cast<double>(clean.data.size());
  return 10.0 * std::log10(mean_of(clean) / noise);
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kAligned: return "aligned";
    case Provenance::kShifted: return "shifted";
    case Provenance::kCrossSpeaker: return "cross-speaker";
  }
  return "?";
}

LipClip shift_clip(const LipClip& clip, int shift) {
  LipClip out = clip;
  const std::size_t fs = clip.frame_size();
  for (int t = 0; t < clip.frames; ++t) {
    const int src = ((t - shift) % clip.frames + clip.frames) % clip.frames;
    std::copy_n(clip.pixels.begin() + static_cast<std::ptrdiff_t>(src * fs), fs, out.pixels.begin() + static_cast<std::ptrdiff_t>(t * fs));
  }
  return out;
}

LipClip crop_clip(const LipClip& clip, int frames) {
  require(frames >= 1 && frames <= clip.frames, ErrorCode::kShape, "crop_clip: bad frame count");
  LipClip out = clip;
  out.frames = frames;
  out.pixels.resize(static_cast<std::size_t>(frames) * clip.frame_size());
  return out;
}

Matrix crop_rows(const Matrix& m, int rows) {
  require(rows >= 1 && rows <= m.rows, ErrorCode::kShape, "crop_rows: bad row count");
  Matrix out = m;
  out.rows = rows;
  out.data.resize(static_cast<std::size_t>(rows) * m.cols);
  return out;
}

std::vector<SyncPair> make_pairs(const std::vector<UtteranceSample>& samples, double negative_fraction,
                                 int min_shift, std::uint64_t seed) {
  const int n = static_cast<int>(samples.size());
  require(n >= 1, ErrorCode::kPairConstruction, "make_pairs: no samples");
  require(negative_fraction >= 0.0 && negative_fraction <= 1.0, ErrorCode::kConfig, "negative_fraction must be in [0,1]");
  require(min_shift >= 1, ErrorCode::kConfig, "min_shift must be >= 1");
  std::mt19937_64 rng(mix_seed(seed, 0x9A1B));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_neg = static_cast<int>(std::floor(negative_fraction * n));
  const int n_shift = n_neg / 2 + (n_neg % 2 == 1 && std::bernoulli_distribution(0.5)(rng) ? 1 : 0);

  std::vector<SyncPair> pairs(n);
  for (int i = 0; i < n; ++i) {
    pairs[i].mel = samples[i].mel;
    pairs[i].video = samples[i].video;
    pairs[i].audio_source = pairs[i].video_source = i;
  }
  for (int r = 0; r < n_neg; ++r) {
    const int i = order[r];
    SyncPair& p = pairs[i];
    const UtteranceSample& s = samples[i];
    p.label = 0;
    const bool can_shift = s.video_frames() > 2 * min_shift;
    const bool want_shift = r < n_shift;
    if ((want_shift && can_shift) || (n == 1 && can_shift)) {
      const int shift = std::uniform_int_distribution<int>(min_shift, s.video_frames() - min_shift)(rng);
      p.provenance = Provenance::kShifted;
      p.shift = shift;
      p.video = shift_clip(s.video, shift);
      continue;
    }
    require(n >= 2, ErrorCode::kPairConstruction,
            "make_pairs: cannot build a negative from a single sample with T <= 2*min_shift");
    std::vector<int> others;
    for (int j = 0; j < n; ++j)
      if (j != i && samples[j].speaker_id != s.speaker_id) others.push_back(j);
    if (others.empty())
      for (int j = 0; j < n; ++j)
        if (j != i) others.push_back(j);
    const int j = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    const int frames = std::min(s.video_frames(), samples[j].video_frames());
    p.provenance = Provenance::kCrossSpeaker;
    p.video_source = j;
    p.mel = crop_rows(s.mel, 4 * frames);
    p.video = crop_clip(samples[j].video, frames);
  }
  return pairs;
}

// ---- corpus -----------------------------------------------------------------

const std::vector<UtteranceSample>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  fail(ErrorCode::kConfig, "unknown split: " + name);
}

Corpus gen_corpus(const CorpusSpec& spec) {
  spec.corpus.validate();
  require(spec.num_speakers >= 1, ErrorCode::kConfig, "num_speakers must be >= 1");
  require(spec.splits.train >= 0 && spec.splits.val >= 0 && spec.splits.test >= 0, ErrorCode::kConfig, "split sizes must be >= 0");
  Corpus c;
  c.spec = spec;
  const std::pair<const char*, int> plan[] = {{"train", spec.splits.train}, {"val", spec.splits.val}, {"test", spec.splits.test}};
  std::vector<UtteranceSample>* dst[] = {&c.train, &c.val, &c.test};
  for (int s = 0; s < 3; ++s) {
    const int base_speaker = spec.disjoint_speakers ? s * spec.num_speakers : 0;
    dst[s]->reserve(plan[s].second);
    for (int i = 0; i < plan[s].second; ++i) {
      const int speaker = base_speaker + i % spec.num_speakers;
      UtteranceSample u = gen_utterance(spec.corpus, speaker, mix_seed(static_cast<std::uint64_t>(s + 1), static_cast<std::uint64_t>(i)));
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%05d", plan[s].first, i);
      u.id = id;
      dst[s]->push_back(std::move(u));
    }
  }
  return c;
}

std::string symbol_name(int token) {
  if (token >= 0 && token < 26) return std::string(1, static_cast<char>('a' + token));
  return "w" + std::to_string(token);
}

std::string token_string(const TokenSequence& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += symbol_name(tokens[i]);
  }
  return s;
}

namespace {

int parse_symbol(const std::string& sym) {
  if (sym.size() == 1 && sym[0] >= 'a' && sym[0] <= 'z') return sym[0] - 'a';
  require(sym.size() > 1 && sym[0] == 'w', ErrorCode::kFormat, "bad token symbol: " + sym);
  return std::stoi(sym.substr(1));
}

void write_split(const std::vector<UtteranceSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "mel");
  std::filesystem::create_directories(dir / "video");
  std::ofstream index(dir / "index.tsv", std::ios::trunc);
  require(index.good(), ErrorCode::kIo, "cannot write " + (dir / "index.tsv").string());
  index << "id\tspeaker\ttokens\tmel\tvideo\n";
  for (const auto& u : samples) {
    const std::string mel_rel = "mel/" + u.id + ".cgar";
    const std::string vid_rel = "video/" + u.id + ".cgar";
    write_array(dir / mel_rel, DType::kFloat32, {u.mel.rows, u.mel.cols}, u.mel.data);
    write_array(dir / vid_rel, DType::kFloat32, {u.video.frames, u.video.height, u.video.width}, u.video.pixels);
    index << u.id << '\t' << u.speaker_id << '\t' << token_string(u.tokens) << '\t' << mel_rel << '\t' << vid_rel << '\n';
  }
  require(index.good(), ErrorCode::kIo, "write failed: " + (dir / "index.tsv").string());
}

std::vector<UtteranceSample> read_split(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.tsv");
  require(index.good(), ErrorCode::kMissingArtifact, "missing corpus index: " + (dir / "index.tsv").string());
  std::string line;
  std::getline(index, line);
  std::vector<UtteranceSample> out;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    require(f.size() == 5, ErrorCode::kFormat, "bad index record: " + line);
    UtteranceSample u;
    u.id = f[0];
    u.speaker_id = std::stoi(f[1]);
    std::stringstream ts(f[2]);
    std::string sym;
    while (ts >> sym) u.tokens.push_back(parse_symbol(sym));
    const ArrayFile mel = read_array(dir / f[3]);
    require(mel.shape.size() == 2, ErrorCode::kFormat, "mel array must be rank 2: " + f[3]);
    u.mel.rows = mel.shape[0];
    u.mel.cols = mel.shape[1];
    u.mel.data = mel.values;
    const ArrayFile vid = read_array(dir / f[4]);
    require(vid.shape.size() == 3, ErrorCode::kFormat, "video array must be rank 3: " + f[4]);
    u.video.frames = vid.shape[0];
    u.video.height = vid.shape[1];
    u.video.width = vid.shape[2];
    u.video.pixels = vid.values;
    require(u.mel.rows == 4 * u.video.frames, ErrorCode::kFormat, "mel/video length mismatch for " + u.id);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream meta(dir / "corpus.json", std::ios::trunc);
    require(meta.good(), ErrorCode::kIo, "cannot write " + (dir / "corpus.json").string());
    meta << to_json(corpus.spec).dump(2) << '\n';
  }
  write_split(corpus.train, dir / "train");
  write_split(corpus.val, dir / "val");
  write_split(corpus.test, dir / "test");
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "corpus.json");
  require(meta.good(), ErrorCode::kMissingArtifact, "missing corpus: " + (dir / "corpus.json").string());
  Corpus c;
  c.spec = corpus_spec_from_json(nlohmann::json::parse(meta));
  c.train = read_split(dir / "train");
  c.val = read_split(dir / "val");
  c.test = read_split(dir / "test");
  return c;
}

}  // namespace cogenav
