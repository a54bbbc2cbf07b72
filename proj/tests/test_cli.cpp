#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "testutil.hpp"

using namespace cogenav::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

std::string cli() {
  const char* p = std::getenv("COGENAV_CLI");
  REQUIRE_MESSAGE(p != nullptr, "COGENAV_CLI is not set");
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work() {
  static const fs::path dir = scratch_dir("cli");
  return dir;
}

Result run(const std::string& args) {
  const fs::path err = work() / "stderr.txt";
  const std::string cmd = "\"" + cli() + "\" " + args + " --quiet > /dev/null 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

fs::path tiny_config() {
  const fs::path p = work() / "tiny.json";
  if (fs::exists(p)) return p;
  nlohmann::json j = {
      {"corpus", {{"mel_bins", 16}, {"min_tokens", 2}, {"max_tokens", 4}, {"splits", {{"train", 6}, {"val", 2}, {"test", 4}}}}},
      {"backbone",
       {{"feat_dim", 8}, {"num_blocks", 1}, {"num_heads", 2}, {"mel_bins", 16}, {"dropout", 0.0},
        {"audio_channels1", 2}, {"audio_channels2", 3}, {"video_stem_channels", 2}, {"video_channels", 3}}},
      {"adapter", {{"num_heads", 2}, {"hidden_mult", 2.0}}},
      {"srhead", {{"d_model", 8}, {"enc_blocks", 1}, {"dec_blocks", 1}, {"num_heads", 2}, {"mel_bins", 16}}},
      {"pretrain", {{"steps", 2}, {"batch_size", 2}, {"utterances", 10}, {"heldout", 2}, {"eval_every", 1}, {"min_accuracy", 0.0}}},
      {"train", {{"lr", 1e-3}, {"warmup_steps", 1}, {"batch_size", 2}, {"grad_accum", 1}, {"steps", 2}}},
      {"eval", {{"beam", 2}, {"snr_db", 0.0}, {"max_utterances", 3}, {"cross_steps", 1}}}};
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string cfg_flag() { return " --config \"" + tiny_config().string() + "\""; }

std::string out_flag(const std::string& name) { return " --out \"" + (work() / name).string() + "\""; }

}  // namespace

TEST_CASE("usage errors exit 2 with a tagged message") {
  const Result r = run("train");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[USAGE]: ", 0) == 0);
}

TEST_CASE("config errors carry the CONFIG tag") {
  const fs::path bad = work() / "bad.json";
  std::ofstream(bad) << R"({"train": {"lamda": 1.0}})";
  const Result r = run("gen-corpus --config \"" + bad.string() + "\"" + out_flag("bad_out"));
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error[CONFIG]: ", 0) == 0);
  CHECK(r.err.find("lamda") != std::string::npos);
}

TEST_CASE("missing artifacts are reported before any work") {
  const Result r = run("train --corpus \"" + (work() / "nowhere").string() + "\" --head x.ckpt" + out_flag("t0"));
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error[MISSING_ARTIFACT]: ", 0) == 0);
  CHECK(!fs::exists(work() / "t0"));
}

TEST_CASE("gen-corpus writes a manifest and refuses to overwrite") {
  REQUIRE(run("gen-corpus" + cfg_flag() + out_flag("corpus_a")).code == 0);
  const auto m = nlohmann::json::parse(slurp(work() / "corpus_a" / "manifest.json"));
  for (const char* k : {"command", "config_path", "resolved_config", "seed", "out_dir", "tool_version", "flags"})
    CHECK(m.contains(k));
  CHECK(m["command"] == "gen-corpus");
  CHECK(m["resolved_config"]["corpus"]["mel_bins"] == 16);

  const Result again = run("gen-corpus" + cfg_flag() + out_flag("corpus_a"));
  CHECK(again.code == 1);
  CHECK(again.err.rfind("error[REFUSED]: ", 0) == 0);
  CHECK(run("gen-corpus" + cfg_flag() + out_flag("corpus_a") + " --force").code == 0);

  REQUIRE(run("gen-corpus" + cfg_flag() + out_flag("corpus_b")).code == 0);
  for (const char* split : {"train", "val", "test"})
    CHECK(slurp(work() / "corpus_a" / split / "index.tsv") == slurp(work() / "corpus_b" / split / "index.tsv"));

  REQUIRE(run("gen-corpus" + cfg_flag() + out_flag("corpus_c") + " --seed 9").code == 0);
  CHECK(slurp(work() / "corpus_a" / "train" / "index.tsv") != slurp(work() / "corpus_c" / "train" / "index.tsv"));
  CHECK(nlohmann::json::parse(slurp(work() / "corpus_c" / "manifest.json"))["seed"] == 9);
}

TEST_CASE("the full pipeline runs end to end on a tiny config") {
  const std::string corpus = " --corpus \"" + (work() / "corpus_p").string() + "\"";
  REQUIRE(run("gen-corpus" + cfg_flag() + out_flag("corpus_p")).code == 0);
  const Result pre = run("pretrain-head" + cfg_flag() + out_flag("head"));
  INFO(pre.err);
  REQUIRE(pre.code == 0);
  const std::string head = " --head \"" + (work() / "head" / "head.ckpt").string() + "\"";

  const Result tr = run("train" + cfg_flag() + corpus + head + out_flag("run"));
  INFO(tr.err);
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(work() / "run" / "model.ckpt"));
  CHECK(fs::exists(work() / "run" / "train_log.jsonl"));
  const std::string ckpt = " --checkpoint \"" + (work() / "run" / "model.ckpt").string() + "\"";

  REQUIRE(run("eval" + cfg_flag() + corpus + ckpt + " --task vsr" + out_flag("eval")).code == 0);
  REQUIRE(run("eval" + cfg_flag() + corpus + ckpt + " --task avsr_noisy --snr 0" + out_flag("eval")).code == 0);
  REQUIRE(run("eval" + cfg_flag() + corpus + ckpt + " --task avsr_clean" + out_flag("eval")).code == 0);
  CHECK(fs::exists(work() / "eval" / "model_xadapter.ckpt"));
  std::ifstream results(work() / "eval" / "results.jsonl");
  std::vector<std::string> tasks;
  for (std::string line; std::getline(results, line);) tasks.push_back(nlohmann::json::parse(line)["task"]);
  CHECK(tasks == std::vector<std::string>{"VSR", "AVSR_noisy", "AVSR_clean"});

  REQUIRE(run("heatmap" + cfg_flag() + corpus + ckpt + " --index 1" + out_flag("heat")).code == 0);
  CHECK(fs::exists(work() / "heat" / "heatmap_test_00001.csv"));
  CHECK(fs::exists(work() / "heat" / "heatmap_test_00001.pgm"));
  CHECK(run("heatmap" + cfg_flag() + corpus + ckpt + " --index 99" + out_flag("heat")).err.rfind("error[CONFIG]", 0) == 0);

  const Result ab = run("ablate" + cfg_flag() + corpus + head + " --axis adapter --values none full --steps 1" + out_flag("abl"));
  INFO(ab.err);
  REQUIRE(ab.code == 0);
  const std::string table = slurp(work() / "abl" / "ablation_adapter.csv");
  CHECK(table.rfind("adapter,vsr_wer,avsr_noisy_wer,audio_only_wer,sync_auc\nnone,", 0) == 0);
  CHECK(table.find("\nfull,") != std::string::npos);
}

TEST_CASE("a head checkpoint with a wrong checksum is refused") {
  REQUIRE(run("gen-corpus" + cfg_flag() + out_flag("corpus_r")).code == 0);
  REQUIRE(run("pretrain-head" + cfg_flag() + out_flag("head_r")).code == 0);
  const fs::path ckpt = work() / "head_r" / "head.ckpt";
  std::string bytes = slurp(ckpt);
  bytes[bytes.size() - 3] ^= 0x5A;
  std::ofstream(ckpt, std::ios::binary | std::ios::trunc) << bytes;
  const Result r = run("train" + cfg_flag() + " --corpus \"" + (work() / "corpus_r").string() + "\" --head \"" +
                       ckpt.string() + "\"" + out_flag("run_r"));
  CHECK(r.code == 1);
  CHECK((r.err.rfind("error[REFUSED]: ", 0) == 0 || r.err.rfind("error[FORMAT]: ", 0) == 0));
}
