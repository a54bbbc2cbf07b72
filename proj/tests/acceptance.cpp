// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Trained artifacts are shared between criteria and kept
// under --work.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "cogenav/commands.hpp"
#include "cogenav/sync.hpp"
#include "cogenav/train.hpp"
#include "gradcheck.hpp"

using namespace cogenav;
using namespace cogenav::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kIdentityTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kLossDrop = 0.5;
constexpr double kMinSyncAuc = 0.95;
constexpr double kDominanceMargin = 0.05;
constexpr double kNoisyRatio = 0.7;
constexpr double kModalityTol = 0.03;
constexpr int kModalityDraws = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void log_line(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// ---- shared artifacts -------------------------------------------------------

class Bench {
 public:
  Bench(fs::path work, RunConfig cfg) : work_(std::move(work)), cfg_(std::move(cfg)) {}

  const RunConfig& config() const { return cfg_; }
  const fs::path& work() const { return work_; }

  const Corpus& corpus() {
    if (!corpus_) {
      log_line("generating corpus");
      corpus_ = std::make_unique<Corpus>(gen_corpus(cfg_.corpus));
      write_corpus(*corpus_, work_ / "corpus");
    }
    return *corpus_;
  }

  const fs::path& head() {
    if (head_.empty()) {
      log_line("pretraining SR head");
      CoGenAV model(cfg_.model, cfg_.pretrain.seed);
      const auto r = pretrain_srhead(model.head(), model.store(), cfg_.corpus.corpus, cfg_.pretrain);
      log_line(fmt("head held-out token accuracy %.4f after %g steps", r.heldout_accuracy, r.steps));
      head_ = work_ / "head" / "head.ckpt";
      fs::create_directories(head_.parent_path());
      save_model(head_, model, {{"heldout_accuracy", r.heldout_accuracy}});
    }
    return head_;
  }

  struct Run {
    std::unique_ptr<CoGenAV> model;
    FitResult fit;
    std::uint64_t head_before = 0;
    std::uint64_t head_after = 0;
  };

  Run& run(double lambda) {
    auto it = runs_.find(lambda);
    if (it != runs_.end()) return it->second;
    RunConfig cfg = cfg_;
    cfg.train.lambda = lambda;
    Run r;
    r.model = std::make_unique<CoGenAV>(cfg.model, cfg.train.seed);
    load_head(*r.model, head());
    r.head_before = r.model->store().checksum(kHeadPrefix);
    log_line(fmt("training lambda=%g for %g steps", lambda, cfg.train.steps));
    const auto t0 = std::chrono::steady_clock::now();
    FitOptions fo;
    fo.out_dir = work_ / fmt("run_lambda%g", lambda);
    fo.run_config = to_json(cfg);
    r.fit = fit(*r.model, corpus().train, cfg.train, fo);
    r.head_after = r.model->store().checksum(kHeadPrefix);
    log_line(fmt("trained in %.0f s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
    return runs_.emplace(lambda, std::move(r)).first->second;
  }

 private:
  fs::path work_;
  RunConfig cfg_;
  std::unique_ptr<Corpus> corpus_;
  fs::path head_;
  std::map<double, Run> runs_;
};

EvalConditions conditions(const RunConfig& cfg) {
  EvalConditions c;
  c.beam = cfg.eval.beam;
  c.seed = cfg.train.seed;
  c.max_utterances = cfg.eval.max_utterances;
  return c;
}

// ---- 1: loss identities -----------------------------------------------------

Outcome loss_identities() {
  auto m = [](int rows, int cols, std::vector<double> v) {
    Matrix x(rows, cols);
    x.data = std::move(v);
    return x;
  };
  const Matrix f = m(3, 4, {0.3, -1.7, 2.2, 0.9, -0.4, 0.05, 1.3, -2.6, 1.1, 1.9, -0.7, 0.2});
  Matrix neg = f;
  for (double& v : neg.data) v = -v;
  const Matrix e1 = m(2, 4, {1, 0, 0, 0, 0, 2.5, 0, 0});
  const Matrix e2 = m(2, 4, {0, 3, 0, 0, 0, 0, -1, 4});
  const double ln2 = contrastive_loss({SyncScore{0.5, {}}}, {1});
  const double same = frame_similarity(f, f).d_bar;
  const double opp = frame_similarity(f, neg).d_bar;
  const double orth = frame_similarity(e1, e2).d_bar;
  Outcome o;
  o.pass = std::abs(ln2 - std::log(2.0)) < kIdentityTol && same == 1.0 && opp == 0.0 && orth == 0.0;
  o.detail = fmt("L(0.5,1)-ln2=%.1e identical=%.17g negated=%g orthogonal=%g", ln2 - std::log(2.0), same, opp, orth);
  return o;
}

// ---- 2: gradient oracle -----------------------------------------------------

void randomize(ParamStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : store.all())
    for (double& v : p.value) v = u(rng);
}

Outcome gradient_oracle() {
  struct Check {
    std::string name;
    GradCheckResult r;
  };
  std::vector<Check> checks;

  BackboneConfig bc;
  bc.feat_dim = 8;
  bc.num_heads = 2;
  bc.num_blocks = 1;
  bc.mel_bins = 8;
  bc.dropout = 0.0;
  bc.audio_channels1 = 2;
  bc.audio_channels2 = 3;
  bc.video_stem_channels = 2;
  bc.video_channels = 3;
  {
    ParamStore store;
    std::mt19937_64 rng(1);
    const Backbone net(store, bc, rng);
    checks.push_back({"audio encoder", gradcheck([&](Graph& g, const auto& x) { return project(g, net.encode_audio(g, x[0])); },
                                                 {random_leaf({16, 8}, 2)}, params_under(store, "backbone.audio"), 1e-6, 4)});
    checks.push_back({"video encoder", gradcheck([&](Graph& g, const auto& x) { return project(g, net.encode_video(g, x[0])); },
                                                 {random_leaf({4, 4, 4}, 3)}, params_under(store, "backbone.video"), 1e-6, 4)});
    for (Mode mode : {Mode::kA, Mode::kV, Mode::kAV})
      checks.push_back({std::string("context ") + mode_name(mode),
                        gradcheck([&](Graph& g, const auto& x) { return project(g, net.encode_context(g, &x[0], &x[1], mode)); },
                                  {random_leaf({4, 8}, 4), random_leaf({4, 8}, 5)}, params_under(store, "backbone.context"),
                                  1e-6, 4)});
  }
  for (int y : {0, 1})
    checks.push_back({"sync loss y=" + std::to_string(y),
                      gradcheck([y](Graph&, const auto& x) { return contrastive_term(mean_similarity(x[0], x[1]), y); },
                                {random_leaf({4, 8}, 6), random_leaf({4, 8}, 7)}, {})});
  {
    ParamStore store;
    std::mt19937_64 rng(8);
    const DeltaUpsampler up(store, "up", 8, rng);
    const GatedFFN gf(store, "gf", 8, 16, rng);
    randomize(store, 9);
    checks.push_back({"delta upsampler", gradcheck([&](Graph& g, const auto& x) { return project(g, up(g, x[0])); },
                                                   {random_leaf({4, 8}, 10)}, params_under(store, "up"))});
    checks.push_back({"gated ffn", gradcheck([&](Graph& g, const auto& x) { return project(g, gf(g, x[0])); },
                                             {random_leaf({4, 8}, 11)}, params_under(store, "gf"))});
  }
  for (AttentionMode am : {AttentionMode::kSelf, AttentionMode::kCross}) {
    ParamStore store;
    std::mt19937_64 rng(12);
    AdapterConfig ac;
    ac.in_dim = 8;
    ac.out_dim = 8;
    ac.num_heads = 2;
    ac.hidden_mult = 2.0;
    ac.attention_mode = am;
    const Adapter a(store, ac, rng);
    randomize(store, 13);
    checks.push_back({am == AttentionMode::kSelf ? "adapter self" : "adapter cross",
                      gradcheck([&](Graph& g, const auto& x) { return project(g, a(g, x[0], &x[1])); },
                                {random_leaf({2, 8}, 14), random_leaf({4, 8}, 15)}, params_under(store), 1e-6, 4)});
  }
  {
    ModelConfig mc;
    mc.backbone = bc;
    mc.adapter.num_heads = 2;
    mc.adapter.hidden_mult = 2.0;
    mc.head.d_model = 8;
    mc.head.enc_blocks = 1;
    mc.head.dec_blocks = 1;
    mc.head.num_heads = 2;
    mc.head.mel_bins = 8;
    mc.head.vocab_size = 4;
    CoGenAV model(mc, 16);
    randomize(model.store(), 17);
    CorpusConfig cc;
    cc.vocab_size = 4;
    cc.mel_bins = 8;
    cc.min_tokens = cc.max_tokens = 2;
    const UtteranceSample s = gen_utterance(cc, 0, 18);
    std::vector<Param*> trainable;
    for (Param* p : params_under(model.store()))
      if (!has_prefix(p->name, kHeadPrefix)) trainable.push_back(p);
    checks.push_back({"generative loss",
                      gradcheck([&](Graph& g, const auto&) { return model.gen_loss(g, &s.mel, &s.video, Mode::kAV, s.tokens); },
                                {}, trainable, 1e-6, 2)});
  }

  Outcome o;
  o.pass = true;
  double worst = 0.0;
  std::string where;
  int total = 0;
  for (const auto& c : checks) {
    total += c.r.checked;
    if (c.r.max_rel > worst) {
      worst = c.r.max_rel;
      where = c.name + ": " + c.r.worst;
    }
    if (!(c.r.max_rel < kGradTol) || c.r.checked == 0) o.pass = false;
  }
  o.detail = fmt("%g checks over %g paths, max rel err %.2e (tol %.0e)", total, checks.size(), worst, kGradTol);
  if (!o.pass) o.detail += " worst at " + where;
  return o;
}

// ---- 3: upsampler contract --------------------------------------------------

Outcome upsampler_contract() {
  ParamStore store;
  std::mt19937_64 rng(3);
  const DeltaUpsampler up(store, "up", 16, rng);
  int bad = 0;
  for (int t = 1; t <= 64; ++t) {
    const Leaf f = random_leaf({t, 16}, static_cast<std::uint64_t>(t), -5, 5);
    Graph g(false);
    const Tensor out = up(g, g.constant(f.value, f.shape));
    std::vector<double> oracle;
    for (int i = 0; i < t; ++i)
      for (int k = 0; k < 2; ++k) oracle.insert(oracle.end(), f.value.begin() + i * 16, f.value.begin() + (i + 1) * 16);
    if (out.dim(0) != 2 * t || out.value() != oracle) ++bad;
  }
  return {bad == 0, fmt("%g of 64 lengths violate length 2T or bit-exact repetition", bad)};
}

// ---- 4-8: trained-model criteria ---------------------------------------------

Outcome frozen_head(Bench& b) {
  auto& r = b.run(b.config().train.lambda);
  const bool ok = r.head_before == r.head_after && r.head_before == r.fit.head_checksum;
  return {ok, "head checksum " + checksum_hex(r.head_before) + " -> " + checksum_hex(r.head_after) + " over " +
                  std::to_string(r.fit.log.size()) + " steps"};
}

Outcome convergence(Bench& b) {
  auto& r = b.run(b.config().train.lambda);
  const auto& log = r.fit.log;
  if (log.size() < 20) return {false, "fewer than 20 logged steps"};
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += log[i].l_total / 10.0;
    tail += log[log.size() - 10 + i].l_total / 10.0;
  }
  const double drop = 1.0 - tail / head;
  const auto auc = evaluate_task(Task::kSync, *r.model, b.corpus().test, conditions(b.config()));
  Outcome o;
  o.pass = drop >= kLossDrop && auc.value >= kMinSyncAuc;
  o.detail = fmt("loss MA10 %.4f -> %.4f (drop %.1f%%, need %.0f%%)", head, tail, 100 * drop, 100 * kLossDrop) +
             fmt("; held-out sync AUC %.4f (need %.2f)", auc.value, kMinSyncAuc);
  return o;
}

Outcome dominance_direction(Bench& b) {
  const int band = b.config().eval.band;
  const double with = mean_dominance(*b.run(1.0).model, b.corpus().test, band);
  const double without = mean_dominance(*b.run(0.0).model, b.corpus().test, band);
  return {with - without >= kDominanceMargin,
          fmt("mean dominance lambda=1 %.4f, lambda=0 %.4f, margin %.4f (need %.2f)", with, without, with - without,
              kDominanceMargin)};
}

Outcome noisy_avsr(Bench& b) {
  auto& r = b.run(b.config().train.lambda);
  EvalConditions c = conditions(b.config());
  c.snr_db = 0.0;
  const auto rep = evaluate_task(Task::kAVSRNoisy, *r.model, b.corpus().test, c);
  const double a = rep.extra["audio_only_wer"].get<double>();
  return {rep.value <= kNoisyRatio * a,
          fmt("0 dB babble: AV WER %.4f, audio-only WER %.4f, ratio %.3f (need <= %.2f)", rep.value, a,
              a > 0 ? rep.value / a : INFINITY, kNoisyRatio)};
}

Outcome adapter_ablation(Bench& b) {
  const std::vector<std::string> arms{"none", "ffn_mha", "gateffn_mha_norep", "full"};
  log_line("adapter ablation: 4 training runs");
  const auto rows = run_ablation(b.config(), "adapter", arms, b.corpus(), b.head(), b.work() / "ablation", false);
  write_ablation_csv(b.work() / "ablation" / "ablation_adapter.csv", "adapter", rows);
  std::map<std::string, double> w;
  for (const auto& r : rows) w[r.value] = r.vsr_wer;
  const double best_two = std::max(w["gateffn_mha_norep"], w["full"]);
  const bool ok = w["none"] > w["full"] && w["none"] >= w["ffn_mha"] && w["ffn_mha"] >= best_two;
  return {ok, fmt("VSR WER none %.4f, ffn_mha %.4f, gateffn_mha_norep %.4f, full %.4f", w["none"], w["ffn_mha"],
                  w["gateffn_mha_norep"], w["full"])};
}

// ---- 9: modality dropping ---------------------------------------------------

Outcome modality_frequencies() {
  std::mt19937_64 rng(2024);
  const std::array<double, 3> p{0.2, 0.4, 0.4};
  int n[3] = {0, 0, 0};
  for (int i = 0; i < kModalityDraws; ++i) ++n[static_cast<int>(sample_modality(rng, p))];
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(n[k] / double(kModalityDraws) - p[k]));
  return {worst <= kModalityTol, fmt("A %.4f V %.4f AV %.4f, max deviation %.4f", n[0] / double(kModalityDraws),
                                     n[1] / double(kModalityDraws), n[2] / double(kModalityDraws), worst)};
}

// ---- 10: decoding oracle ----------------------------------------------------

StepScorer toy_scorer(int vocab, std::uint64_t seed) {
  return [vocab, seed](const std::vector<int>& prefix) {
    std::uint64_t h = seed;
    for (int t : prefix) h = mix_seed(h, static_cast<std::uint64_t>(t));
    std::mt19937_64 rng(h);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<double> z(vocab);
    for (double& x : z) x = u(rng);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double x : z) s += std::exp(x - mx);
    for (double& x : z) x -= mx + std::log(s);
    return z;
  };
}

Hypothesis brute_force(const StepScorer& scorer, const DecodeSpec& spec) {
  Hypothesis best;
  bool have = false;
  std::vector<int> toks;
  std::function<void(double)> rec = [&](double lp) {
    std::vector<int> prefix{spec.bos};
    prefix.insert(prefix.end(), toks.begin(), toks.end());
    const auto next = scorer(prefix);
    for (int v = 0; v < spec.vocab_size; ++v) {
      toks.push_back(v);
      if (v == spec.eos || static_cast<int>(toks.size()) == spec.max_len) {
        const Hypothesis h{toks, lp + next[v], v == spec.eos};
        if (!have || h.score() > best.score() || (h.score() == best.score() && h.tokens < best.tokens)) best = h;
        have = true;
      } else {
        rec(lp + next[v]);
      }
      toks.pop_back();
    }
  };
  rec(0.0);
  return best;
}

Outcome decoding_oracle(Bench& b) {
  int instances = 0, mismatches = 0;
  for (int vocab = 2; vocab <= 5; ++vocab)
    for (int max_len = 1; max_len <= 4; ++max_len)
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const StepScorer sc = toy_scorer(vocab, seed);
        DecodeSpec spec{vocab, vocab, vocab - 1, 1, max_len};
        spec.beam_size = static_cast<int>(std::pow(vocab, max_len));
        ++instances;
        if (beam_search(sc, spec).tokens != brute_force(sc, spec).tokens) ++mismatches;
      }
  auto& r = b.run(b.config().train.lambda);
  const auto& test = b.corpus().test;
  const int n = std::min<int>(100, static_cast<int>(test.size()));
  std::vector<char> worse(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    const Matrix mem = r.model->memory(nullptr, &test[i].video, Mode::kV);
    worse[i] = r.model->head().decode(mem, 3).score() < r.model->head().decode(mem, 1).score();
  }
  const int n_worse = static_cast<int>(std::count(worse.begin(), worse.end(), 1));
  return {mismatches == 0 && n_worse == 0,
          fmt("brute force mismatches %g/%g; beam3 < beam1 score on %g/%g held-out utterances", mismatches, instances,
              n_worse, n)};
}

// ---- 11: WER oracle ---------------------------------------------------------

int exhaustive_edits(const TokenSequence& a, std::size_t i, const TokenSequence& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  return std::min({exhaustive_edits(a, i + 1, b, j) + 1, exhaustive_edits(a, i, b, j + 1) + 1,
                   exhaustive_edits(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1)});
}

Outcome wer_oracle() {
  std::vector<TokenSequence> seqs{{}};
  for (std::size_t k = 0; k < seqs.size(); ++k)
    if (seqs[k].size() < 5)
      for (int s = 0; s < 3; ++s) {
        TokenSequence t = seqs[k];
        t.push_back(s);
        seqs.push_back(std::move(t));
      }
  long pairs = 0, bad = 0;
  for (const auto& ref : seqs) {
    if (ref.empty()) continue;
    for (const auto& hyp : seqs) {
      ++pairs;
      if (wer(ref, hyp) != static_cast<double>(exhaustive_edits(ref, 0, hyp, 0)) / ref.size()) ++bad;
    }
  }
  return {bad == 0, fmt("%g of %g sequence pairs disagree", bad, pairs)};
}

// ---- 12: determinism --------------------------------------------------------

Outcome determinism(Bench& b) {
  RunConfig cfg = b.config();
  cfg.train.steps = 10;
  auto ten_steps = [&] {
    CoGenAV model(cfg.model, cfg.train.seed);
    load_head(model, b.head());
    std::vector<double> out;
    for (const auto& r : fit(model, b.corpus().train, cfg.train).log) out.push_back(r.l_total);
    return out;
  };
  const auto a = ten_steps(), c = ten_steps();
  write_corpus(gen_corpus(cfg.corpus), b.work() / "corpus_again");
  bool same_index = true;
  for (const char* split : {"train", "val", "test"})
    same_index &= slurp(b.work() / "corpus" / split / "index.tsv") == slurp(b.work() / "corpus_again" / split / "index.tsv");
  return {a == c && same_index,
          std::string(a == c ? "identical" : "different") + " 10-step loss sequences; " +
              (same_index ? "byte-identical" : "different") + " corpus index files"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path work = "acceptance_work";
  std::string config = std::string(COGENAV_SOURCE_DIR) + "/configs/desk.json";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory for corpora, checkpoints and tables");
  app.add_option("--config", config, "run configuration");
  app.add_option("--only", only, "criterion numbers to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  Bench bench(work, load_run_config(config));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss identities", loss_identities},
      {"gradient oracle", gradient_oracle},
      {"upsampler contract", upsampler_contract},
      {"frozen head", [&] { return frozen_head(bench); }},
      {"convergence", [&] { return convergence(bench); }},
      {"alignment heatmap direction", [&] { return dominance_direction(bench); }},
      {"noisy AVSR direction", [&] { return noisy_avsr(bench); }},
      {"adapter ablation direction", [&] { return adapter_ablation(bench); }},
      {"modality dropping", modality_frequencies},
      {"decoding oracle", [&] { return decoding_oracle(bench); }},
      {"WER oracle", wer_oracle},
      {"determinism", [&] { return determinism(bench); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  nlohmann::json report = nlohmann::json::array();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    char head[96];
    std::snprintf(head, sizeof(head), "%s %2d %-28s", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str());
    std::cout << head << " " << o.detail << fmt(" [%.1fs]", secs) << std::endl;
    report.push_back({{"criterion", id}, {"name", criteria[i].first}, {"pass", o.pass}, {"detail", o.detail}, {"seconds", secs}});
  }
  std::ofstream(work / "acceptance.json") << report.dump(2) << '\n';
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
