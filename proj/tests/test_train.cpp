#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cogenav/train.hpp"
#include "testutil.hpp"
#include "tiny.hpp"

using namespace cogenav;
using namespace cogenav::testing;

namespace {

TrainConfig tiny_train(int steps = 3) {
  TrainConfig c;
  c.lr = 1e-3;
  c.warmup_steps = 2;
  c.batch_size = 2;
  c.grad_accum = 2;
  c.steps = steps;
  c.seed = 5;
  return c;
}

const Corpus& corpus() {
  static const Corpus c = gen_corpus(tiny_corpus_spec());
  return c;
}

}  // namespace

TEST_CASE("modality draws follow the configured probabilities") {
  std::mt19937_64 rng(0);
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 10000; ++i) ++counts[static_cast<int>(sample_modality(rng, {0.2, 0.4, 0.4}))];
  CHECK(std::abs(counts[0] / 10000.0 - 0.2) <= 0.03);
  CHECK(std::abs(counts[1] / 10000.0 - 0.4) <= 0.03);
  CHECK(std::abs(counts[2] / 10000.0 - 0.4) <= 0.03);
  for (int i = 0; i < 1000; ++i) REQUIRE(sample_modality(rng, {1.0, 0.0, 0.0}) == Mode::kA);
  for (int i = 0; i < 1000; ++i) REQUIRE(sample_modality(rng, {0.0, 0.0, 1.0}) == Mode::kAV);
  CHECK(code_of([&] { sample_modality(rng, {0.5, 0.4, 0.0}); }) == ErrorCode::kConfig);
  CHECK(code_of([&] { sample_modality(rng, {1.2, -0.2, 0.0}); }) == ErrorCode::kConfig);
}

TEST_CASE("training config validation") {
  TrainConfig c = tiny_train();
  c.lambda = -1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c = tiny_train();
  c.modality_probs = {0.3, 0.3, 0.3};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  c = tiny_train();
  c.snr_range_db = {5.0, -5.0};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kConfig);
  CHECK_NOTHROW(tiny_train().validate());
}

TEST_CASE("warmup schedule") {
  CHECK(warmup_lr(1e-3, 1, 10) == doctest::Approx(1e-4));
  CHECK(warmup_lr(1e-3, 5, 10) == doctest::Approx(5e-4));
  CHECK(warmup_lr(1e-3, 10, 10) == 1e-3);
  CHECK(warmup_lr(1e-3, 3, 0) == 1e-3);
}

TEST_CASE("step reports satisfy the loss identity") {
  for (double lambda : {0.0, 0.5, 1.0}) {
    CoGenAV model(tiny_model_config(), 1);
    TrainConfig cfg = tiny_train();
    cfg.lambda = lambda;
    Trainer t(model, corpus().train, cfg);
    for (int s = 0; s < 2; ++s) {
      const StepReport r = t.step();
      CHECK(std::abs(r.l_total - (r.l_gen + lambda * r.l_co)) <= 1e-9);
      CHECK(r.l_co > 0.0);
      CHECK(r.modes.size() == 2);
      CHECK(r.mode_drawn == r.modes.front());
      const auto j = r.to_json();
      for (const char* k : {"L_Co", "L_Gen", "L_total", "mode_drawn", "modes", "lr", "phase"}) CHECK(j.contains(k));
    }
  }
}

TEST_CASE("lambda = 0 leaves the contrastive term out of the update") {
  // With only audio mode drawn and lambda = 0, the video trunk gets no gradient.
  CoGenAV model(tiny_model_config(), 2);
  TrainConfig cfg = tiny_train(2);
  cfg.lambda = 0.0;
  cfg.modality_probs = {1.0, 0.0, 0.0};
  cfg.phase1_fraction = 0.0;
  const auto before = model.store().checksum("backbone.video");
  const auto audio_before = model.store().checksum("backbone.audio");
  fit(model, corpus().train, cfg);
  CHECK(model.store().checksum("backbone.video") == before);
  CHECK(model.store().checksum("backbone.audio") != audio_before);

  CoGenAV with_co(tiny_model_config(), 2);
  cfg.lambda = 1.0;
  fit(with_co, corpus().train, cfg);
  CHECK(with_co.store().checksum("backbone.video") != before);
}

TEST_CASE("identical seeds give identical loss sequences") {
  auto run = [] {
    CoGenAV model(tiny_model_config(), 3);
    std::vector<double> out;
    for (const auto& r : fit(model, corpus().train, tiny_train(4)).log) out.push_back(r.l_total);
    return out;
  };
  const auto a = run(), b = run();
  CHECK(a == b);
  CoGenAV other(tiny_model_config(), 3);
  TrainConfig cfg = tiny_train(4);
  cfg.seed = 6;
  std::vector<double> c;
  for (const auto& r : fit(other, corpus().train, cfg).log) c.push_back(r.l_total);
  CHECK(c != a);
}

TEST_CASE("phase one trains only the audio encoder and the adapter") {
  CoGenAV model(tiny_model_config(), 4);
  TrainConfig cfg = tiny_train(5);
  cfg.phase1_fraction = 0.4;
  const ParamStore& s = model.store();
  const auto head = s.checksum("srhead"), video = s.checksum("backbone.video"), ctx = s.checksum("backbone.context");
  const auto audio = s.checksum("backbone.audio"), adapter = s.checksum("adapter");
  Trainer t(model, corpus().train, cfg);
  CHECK(t.phase1_steps() == 2);
  for (int i = 0; i < 2; ++i) CHECK(t.step().phase == 1);
  CHECK(s.checksum("backbone.video") == video);
  CHECK(s.checksum("backbone.context") == ctx);
  CHECK(s.checksum("backbone.audio") != audio);
  CHECK(s.checksum("adapter") != adapter);
  CHECK(t.step().phase == 2);
  CHECK(s.checksum("backbone.video") != video);
  CHECK(s.checksum("backbone.context") != ctx);
  CHECK(s.checksum("srhead") == head);
}

TEST_CASE("fit keeps the head frozen and writes its artifacts") {
  CoGenAV model(tiny_model_config(), 5);
  const auto head = model.store().checksum("srhead");
  const auto dir = scratch_dir("fit");
  FitOptions opts;
  opts.out_dir = dir;
  opts.run_config = {{"note", "tiny"}};
  int seen = 0;
  opts.on_step = [&](const StepReport&) { ++seen; };
  const FitResult r = fit(model, corpus().train, tiny_train(3), opts);
  CHECK(seen == 3);
  CHECK(r.head_checksum == head);
  CHECK(model.store().checksum("srhead") == head);
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["step"].get<int>() == ++lines);
    CHECK(j["L_total"].get<double>() == r.log[lines - 1].l_total);
  }
  CHECK(lines == 3);
  nlohmann::json meta;
  const auto loaded = load_model(dir / "model.ckpt", &meta);
  CHECK(loaded->store().checksum() == model.store().checksum());
  CHECK(meta["run_config"]["note"] == "tiny");
}

TEST_CASE("non-finite losses stop training with context") {
  auto bad = corpus().train;
  for (auto& u : bad) u.video.pixels[0] = std::nan("");
  CoGenAV model(tiny_model_config(), 6);
  try {
    fit(model, bad, tiny_train(1));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    CHECK(std::string(e.what()).find("train_") != std::string::npos);
  }
}

TEST_CASE("training needs at least two utterances") {
  CoGenAV model(tiny_model_config(), 7);
  const std::vector<UtteranceSample> one{corpus().train[0]};
  CHECK(code_of([&] { Trainer(model, one, tiny_train()); }) == ErrorCode::kBatch);
}

TEST_CASE("cross adapter training leaves everything else untouched") {
  CoGenAV model(tiny_model_config(), 8);
  TrainConfig cfg = tiny_train(2);
  train_cross_adapter(model, corpus().train, cfg);
  REQUIRE(model.cross_adapter() != nullptr);
  CHECK(model.store().checksum("backbone") == CoGenAV(tiny_model_config(), 8).store().checksum("backbone"));
  CHECK(model.store().checksum("srhead") == CoGenAV(tiny_model_config(), 8).store().checksum("srhead"));
  const Matrix mem = [&] {
    Graph g(false);
    return to_matrix(model.cross_memory(g, corpus().train[0].mel, corpus().train[0].video));
  }();
  CHECK(mem.rows == corpus().train[0].mel.rows / 2);
}
