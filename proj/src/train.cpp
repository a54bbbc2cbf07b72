#include "cogenav/train.hpp"

#include <cmath>
#include <fstream>

#include "cogenav/errors.hpp"
#include "cogenav/sync.hpp"

namespace cogenav {

void TrainConfig::validate() const {
  require(lambda >= 0.0, ErrorCode::kConfig, "lambda must be >= 0");
  double sum = 0.0;
  for (double p : modality_probs) {
    require(p >= 0.0, ErrorCode::kConfig, "modality_probs must be non-negative");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorCode::kConfig, "modality_probs must sum to 1");
  require(lr > 0.0, ErrorCode::kConfig, "lr must be positive");
  require(warmup_steps >= 0, ErrorCode::kConfig, "warmup_steps must be >= 0");
  require(batch_size >= 2, ErrorCode::kConfig, "batch_size must be >= 2 (negatives need a second utterance)");
  require(grad_accum >= 1, ErrorCode::kConfig, "grad_accum must be >= 1");
  require(snr_range_db[0] <= snr_range_db[1], ErrorCode::kConfig, "snr_range_db must be [lo, hi] with lo <= hi");
  require(negative_fraction >= 0.0 && negative_fraction <= 1.0, ErrorCode::kConfig, "negative_fraction must be in [0,1]");
  require(steps >= 1, ErrorCode::kConfig, "steps must be >= 1");
  require(phase1_fraction >= 0.0 && phase1_fraction <= 1.0, ErrorCode::kConfig, "phase1_fraction must be in [0,1]");
  require(min_shift >= 1, ErrorCode::kConfig, "min_shift must be >= 1");
}

nlohmann::json StepReport::to_json() const {
  std::vector<std::string> m;
  for (Mode x : modes) m.emplace_back(mode_name(x));
  return {{"step", step}, {"L_Co", l_co},  {"L_Gen", l_gen},       {"L_total", l_total},
          {"mode_drawn", mode_name(mode_drawn)}, {"modes", m}, {"lr", lr}, {"phase", phase}};
}

Mode sample_modality(std::mt19937_64& rng, const std::array<double, 3>& probs) {
  double sum = 0.0;
  for (double p : probs) {
    require(p >= 0.0 && std::isfinite(p), ErrorCode::kConfig, "sample_modality: probabilities must be finite and >= 0");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, ErrorCode::kConfig, "sample_modality: probabilities must sum to 1");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < probs[0]) return Mode::kA;
  if (u < probs[0] + probs[1]) return Mode::kV;
  return probs[2] > 0.0 ? Mode::kAV : (probs[1] > 0.0 ? Mode::kV : Mode::kA);
}

Trainer::Trainer(CoGenAV& model, const std::vector<UtteranceSample>& train, const TrainConfig& cfg)
    : model_(model), train_(train), cfg_(cfg), adam_(model.store()), rng_(cfg.seed) {
  cfg_.validate();
  require(static_cast<int>(train.size()) >= 2, ErrorCode::kBatch, "training needs at least 2 utterances");
  phase1_steps_ = static_cast<int>(std::lround(cfg.phase1_fraction * cfg.steps));
}

void Trainer::set_phase(int phase) {
  if (phase == phase_) return;
  phase_ = phase;
  ParamStore& s = model_.store();
  s.set_all_trainable(false);
  s.set_trainable(std::string(kAdapterPrefix) + ".", true);
  if (phase == 1)
    s.set_trainable(std::string(kBackbonePrefix) + ".audio.", true);
  else
    s.set_trainable(std::string(kBackbonePrefix) + ".", true);
}

namespace {

struct GenItem {
  const UtteranceSample* sample;
  Matrix noisy;
  Mode mode;
  std::uint64_t seed;
};

struct CoItem {
  SyncPair pair;
  std::uint64_t seed;
};

}  // namespace

StepReport Trainer::step() {
  ++step_;
  set_phase(step_ <= phase1_steps_ ? 1 : 2);
  const int n = static_cast<int>(train_.size());
  const int b = cfg_.batch_size;
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_real_distribution<double> snr(cfg_.snr_range_db[0], cfg_.snr_range_db[1]);

  StepReport rep;
  rep.step = step_;
  rep.phase = phase_;
  std::vector<GenItem> gen;
  std::vector<CoItem> co;
  std::vector<int> ids;
  for (int m = 0; m < cfg_.grad_accum; ++m) {
    std::vector<UtteranceSample> micro;
    for (int i = 0; i < b; ++i) {
      const int id = pick(rng_);
      ids.push_back(id);
      micro.push_back(train_[id]);
    }
    for (auto& p : make_pairs(micro, cfg_.negative_fraction, cfg_.min_shift, rng_())) co.push_back({std::move(p), rng_()});
    const Mode mode = sample_modality(rng_, cfg_.modality_probs);
    rep.modes.push_back(mode);
    for (int i = 0; i < b; ++i) {
      const int self = ids[ids.size() - b + i];
      int other = pick(rng_);
      if (other == self) other = (other + 1) % n;
      const auto& s = train_[self];
      Matrix noisy = mix_noise(s.mel, fit_noise(train_[other].mel, s.mel.rows), snr(rng_));
      gen.push_back({&train_[self], std::move(noisy), mode, rng_()});
    }
  }
  rep.mode_drawn = rep.modes.front();
  rep.lr = warmup_lr(cfg_.lr, step_, cfg_.warmup_steps);

  const int n_gen = static_cast<int>(gen.size()), n_co = static_cast<int>(co.size());
  GradBuffer grads;
  const auto losses = parallel_items(n_gen + n_co, [&](int i, GradBuffer& buf) {
    if (i < n_gen) {
      const auto& it = gen[i];
      Graph g(true, true, it.seed);
      Tensor loss = model_.gen_loss(g, &it.noisy, &it.sample->video, it.mode, it.sample->tokens);
      g.backward(loss);
      g.accumulate_param_grads(buf, 1.0 / n_gen);
      return loss.item();
    }
    const auto& it = co[i - n_gen];
    // The contrastive term is evaluated even at lambda = 0 so it can be logged.
    Graph g(cfg_.lambda > 0.0, true, it.seed);
    Tensor fa = model_.context(g, &it.pair.mel, nullptr, Mode::kA);
    Tensor fv = model_.context(g, nullptr, &it.pair.video, Mode::kV);
    Tensor loss = contrastive_term(mean_similarity(fa, fv), it.pair.label);
    if (cfg_.lambda > 0.0) {
      g.backward(loss);
      g.accumulate_param_grads(buf, cfg_.lambda / n_co);
    }
    return loss.item();
  }, grads);
  for (int i = 0; i < n_gen; ++i) rep.l_gen += losses[i] / n_gen;
  for (int i = 0; i < n_co; ++i) rep.l_co += losses[n_gen + i] / n_co;
  rep.l_total = rep.l_gen + cfg_.lambda * rep.l_co;

  if (!std::isfinite(rep.l_total)) {
    std::string batch;
    for (int id : ids) batch += (batch.empty() ? "" : ",") + train_[id].id;
    fail(ErrorCode::kNonFinite, "non-finite loss at step " + std::to_string(step_) + " (L_Co=" + std::to_string(rep.l_co) +
                                    ", L_Gen=" + std::to_string(rep.l_gen) + ", mode=" + mode_name(rep.mode_drawn) +
                                    ", batch=" + batch + ")");
  }
  clip_grad_norm(grads, cfg_.grad_clip);
  adam_.step(model_.store(), grads, rep.lr);
  return rep;
}

FitResult fit(CoGenAV& model, const std::vector<UtteranceSample>& train, const TrainConfig& cfg, const FitOptions& opts) {
  FitResult result;
  result.head_checksum = model.store().checksum(kHeadPrefix);
  model.store().set_trainable(kHeadPrefix, false);
  Trainer trainer(model, train, cfg);

  std::ofstream log;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    log.open(opts.out_dir / "train_log.jsonl", std::ios::trunc);
    require(log.good(), ErrorCode::kIo, "cannot write " + (opts.out_dir / "train_log.jsonl").string());
  }
  auto meta = [&](int step) {
    return nlohmann::json{{"step", step}, {"run_config", opts.run_config}};
  };
  for (int s = 1; s <= cfg.steps; ++s) {
    StepReport rep = trainer.step();
    if (log.is_open()) log << rep.to_json().dump() << '\n' << std::flush;
    if (opts.on_step) opts.on_step(rep);
    result.log.push_back(std::move(rep));
    if (!opts.out_dir.empty() && cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0 && s < cfg.steps)
      save_model(opts.out_dir / ("model_step" + std::to_string(s) + ".ckpt"), model, meta(s));
  }
  require(model.store().checksum(kHeadPrefix) == result.head_checksum, ErrorCode::kRefused,
          "SR head parameters changed during training");
  model.store().set_all_trainable(true);
  model.store().set_trainable(kHeadPrefix, false);
  if (!opts.out_dir.empty()) save_model(opts.out_dir / "model.ckpt", model, meta(cfg.steps));
  return result;
}

void train_cross_adapter(CoGenAV& model, const std::vector<UtteranceSample>& train, const TrainConfig& cfg) {
  cfg.validate();
  if (!model.cross_adapter()) model.add_cross_adapter(cfg.seed);
  ParamStore& store = model.store();
  const std::uint64_t head_sum = store.checksum(kHeadPrefix);
  store.set_all_trainable(false);
  store.set_trainable(std::string(kCrossPrefix) + ".", true);
  Adam adam(store);
  std::mt19937_64 rng(mix_seed(cfg.seed, 77));
  std::uniform_int_distribution<int> pick(0, static_cast<int>(train.size()) - 1);
  const int n = cfg.batch_size * cfg.grad_accum;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int& id : ids) id = pick(rng);
    GradBuffer grads;
    parallel_items(n, [&](int i, GradBuffer& buf) {
      const auto& s = train[ids[i]];
      Graph g(true, false);
      Tensor loss = model.head().nll_loss(g, model.cross_memory(g, s.mel, s.video), s.tokens);
      g.backward(loss);
      g.accumulate_param_grads(buf, 1.0 / n);
      return loss.item();
    }, grads);
    adam.step(store, grads, warmup_lr(cfg.lr, step, cfg.warmup_steps));
  }
  store.set_all_trainable(true);
  store.set_trainable(kHeadPrefix, false);
  require(store.checksum(kHeadPrefix) == head_sum, ErrorCode::kRefused, "SR head parameters changed during adapter training");
}

}  // namespace cogenav
