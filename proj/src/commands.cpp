#include "cogenav/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cogenav/checkpoint.hpp"
#include "cogenav/errors.hpp"

namespace cogenav {

namespace fs = std::filesystem;

fs::path resolve_out_dir(const CommandOptions& opts, const std::string& command) {
  if (!opts.out.empty()) return opts.out;
  const char* root = std::getenv(kOutRootEnv);
  return fs::path(root && *root ? root : "runs") / command;
}

RunConfig resolve_config(const CommandOptions& opts, const std::string& command) {
  RunConfig cfg;
  if (!opts.config_path.empty()) cfg = load_run_config(opts.config_path);
  if (opts.seed) {
    if (command == "gen-corpus") cfg.corpus.corpus.seed = *opts.seed;
    else if (command == "pretrain-head") cfg.pretrain.seed = *opts.seed;
    else cfg.train.seed = *opts.seed;
  }
  if (opts.lambda) cfg.train.lambda = *opts.lambda;
  if (opts.steps) {
    if (command == "pretrain-head") cfg.pretrain.steps = *opts.steps;
    else cfg.train.steps = *opts.steps;
  }
  if (opts.beam) cfg.eval.beam = *opts.beam;
  if (opts.snr) cfg.eval.snr_db = *opts.snr;
  cfg.validate();
  return cfg;
}

namespace {

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir))
    require(force, ErrorCode::kRefused, "output directory " + dir.string() + " is not empty (use --force)");
  fs::create_directories(dir);
}

void require_file(const fs::path& p, const std::string& what, const std::string& hint) {
  require(!p.empty() && fs::exists(p), ErrorCode::kMissingArtifact,
          "missing " + what + (p.empty() ? "" : " at " + p.string()) + "; " + hint);
}

CoGenAV* build_model(const RunConfig& cfg, const fs::path& head, std::unique_ptr<CoGenAV>& holder) {
  holder = std::make_unique<CoGenAV>(cfg.model, cfg.train.seed);
  load_head(*holder, head);
  return holder.get();
}

void say(bool quiet, const std::string& line) {
  if (!quiet) std::cout << line << std::endl;
}

}  // namespace

void write_manifest(const fs::path& dir, const std::string& command, const CommandOptions& opts,
                    const RunConfig& resolved) {
  nlohmann::json m;
  m["command"] = command;
  m["config_path"] = opts.config_path;
  m["resolved_config"] = to_json(resolved);
  m["seed"] = command == "gen-corpus" ? resolved.corpus.corpus.seed
              : command == "pretrain-head" ? resolved.pretrain.seed
                                            : resolved.train.seed;
  m["out_dir"] = dir.string();
  m["tool_version"] = kToolVersion;
  nlohmann::json flags;
  if (opts.seed) flags["seed"] = *opts.seed;
  if (opts.task) flags["task"] = *opts.task;
  if (opts.snr) flags["snr"] = *opts.snr;
  if (opts.beam) flags["beam"] = *opts.beam;
  if (opts.lambda) flags["lambda"] = *opts.lambda;
  if (opts.steps) flags["steps"] = *opts.steps;
  if (!opts.corpus.empty()) flags["corpus"] = opts.corpus.string();
  if (!opts.head.empty()) flags["head"] = opts.head.string();
  if (!opts.checkpoint.empty()) flags["checkpoint"] = opts.checkpoint.string();
  if (!opts.axis.empty()) flags["axis"] = opts.axis;
  if (!opts.values.empty()) flags["values"] = opts.values;
  m["flags"] = flags.is_null() ? nlohmann::json::object() : flags;
  fs::create_directories(dir);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

void cmd_gen_corpus(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts, "gen-corpus");
  const fs::path dir = resolve_out_dir(opts, "gen-corpus");
  prepare_out_dir(dir, opts.force);
  write_manifest(dir, "gen-corpus", opts, cfg);
  write_corpus(gen_corpus(cfg.corpus), dir);
  say(opts.quiet, "corpus written to " + dir.string());
}

void cmd_pretrain_head(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts, "pretrain-head");
  const fs::path dir = resolve_out_dir(opts, "pretrain-head");
  prepare_out_dir(dir, opts.force);
  write_manifest(dir, "pretrain-head", opts, cfg);
  CoGenAV model(cfg.model, cfg.pretrain.seed);
  const PretrainResult r = pretrain_srhead(model.head(), model.store(), cfg.corpus.corpus, cfg.pretrain, [&](int step, double loss, double acc) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "step %5d  loss %.4f  heldout_acc %.4f", step, loss, acc);
    say(opts.quiet, buf);
  });
  save_model(dir / "head.ckpt", model,
             {{"heldout_accuracy", r.heldout_accuracy}, {"pretrain_steps", r.steps}});
  say(opts.quiet, "head checksum " + checksum_hex(r.checksum) + " written to " + (dir / "head.ckpt").string());
}

void cmd_train(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts, "train");
  require_file(opts.corpus / "corpus.json", "corpus", "run `cogenav gen-corpus` first");
  require_file(opts.head, "SR head checkpoint", "run `cogenav pretrain-head` first");
  const fs::path dir = resolve_out_dir(opts, "train");
  prepare_out_dir(dir, opts.force);
  write_manifest(dir, "train", opts, cfg);
  const Corpus corpus = read_corpus(opts.corpus);
  std::unique_ptr<CoGenAV> holder;
  CoGenAV* model = build_model(cfg, opts.head, holder);
  FitOptions fo;
  fo.out_dir = dir;
  fo.run_config = to_json(cfg);
  fo.on_step = [&](const StepReport& r) {
    if (r.step % 10 != 0 && r.step != 1) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "step %4d  phase %d  L_Co %.4f  L_Gen %.4f  L_total %.4f  lr %.2e", r.step, r.phase,
                  r.l_co, r.l_gen, r.l_total, r.lr);
    say(opts.quiet, buf);
  };
  fit(*model, corpus.train, cfg.train, fo);
  say(opts.quiet, "checkpoint written to " + (dir / "model.ckpt").string());
}

EvalReport cmd_eval(const CommandOptions& opts) {
  require(opts.task.has_value(), ErrorCode::kConfig, "eval requires --task");
  const Task task = parse_task(*opts.task);
  RunConfig cfg = resolve_config(opts, "eval");
  require_file(opts.checkpoint, "model checkpoint", "run `cogenav train` first");
  require_file(opts.corpus / "corpus.json", "corpus", "run `cogenav gen-corpus` first");
  require(task != Task::kAVSRNoisy || opts.snr.has_value() || !opts.config_path.empty(), ErrorCode::kConfig,
          "AVSR_noisy requires --snr");
  const fs::path dir = resolve_out_dir(opts, "eval");
  fs::create_directories(dir);
  write_manifest(dir, "eval", opts, cfg);
  const Corpus corpus = read_corpus(opts.corpus);
  nlohmann::json meta;
  std::unique_ptr<CoGenAV> model = load_model(opts.checkpoint, &meta);

  if (task == Task::kAVSRClean && !model->cross_adapter()) {
    TrainConfig tc = cfg.train;
    tc.steps = cfg.eval.cross_steps;
    say(opts.quiet, "training cross-attention adapter for " + std::to_string(tc.steps) + " steps");
    train_cross_adapter(*model, corpus.train, tc);
    save_model(dir / "model_xadapter.ckpt", *model, meta);
  }
  EvalConditions cond;
  cond.snr_db = task == Task::kAVSRNoisy ? cfg.eval.snr_db : std::numeric_limits<double>::quiet_NaN();
  cond.beam = cfg.eval.beam;
  cond.split = opts.split;
  cond.checkpoint_id = meta.value("checksum", opts.checkpoint.string());
  cond.max_utterances = cfg.eval.max_utterances;
  cond.seed = cfg.train.seed;
  EvalReport rep = evaluate_task(task, *model, corpus.split(opts.split), cond);
  append_report(dir / "results.jsonl", rep);
  say(opts.quiet, rep.to_json().dump());
  return rep;
}

double cmd_heatmap(const CommandOptions& opts) {
  RunConfig cfg = resolve_config(opts, "heatmap");
  require_file(opts.checkpoint, "model checkpoint", "run `cogenav train` first");
  require_file(opts.corpus / "corpus.json", "corpus", "run `cogenav gen-corpus` first");
  const fs::path dir = resolve_out_dir(opts, "heatmap");
  fs::create_directories(dir);
  write_manifest(dir, "heatmap", opts, cfg);
  const Corpus corpus = read_corpus(opts.corpus);
  const auto& split = corpus.split(opts.split);
  require(opts.index >= 0 && opts.index < static_cast<int>(split.size()), ErrorCode::kConfig, "heatmap: --index out of range");
  std::unique_ptr<CoGenAV> model = load_model(opts.checkpoint);
  const UtteranceSample& s = split[opts.index];
  const Matrix m = alignment_matrix(*model, s);
  heatmap_export(m, dir / ("heatmap_" + s.id));
  const double dom = diagonal_dominance(m, std::min(cfg.eval.band, m.rows - 1));
  say(opts.quiet, "diagonal_dominance(band " + std::to_string(cfg.eval.band) + ") = " + std::to_string(dom) + " for " + s.id);
  return dom;
}

namespace {

std::array<double, 3> parse_probs(const std::string& v) {
  std::array<double, 3> p{};
  std::stringstream ss(v);
  std::string cell;
  int k = 0;
  while (std::getline(ss, cell, ',')) {
    require(k < 3, ErrorCode::kConfig, "modality value must be 'pA,pV,pAV': " + v);
    p[k++] = std::stod(cell);
  }
  require(k == 3, ErrorCode::kConfig, "modality value must be 'pA,pV,pAV': " + v);
  return p;
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& axis, const std::vector<std::string>& values,
                                      const Corpus& corpus, const fs::path& head, const fs::path& out_dir, bool quiet) {
  require(!values.empty(), ErrorCode::kConfig, "ablate: empty values list");
  require(axis == "lambda" || axis == "modality" || axis == "adapter", ErrorCode::kConfig,
          "ablate: axis must be lambda, modality or adapter");
  std::vector<AblationRow> rows;
  for (std::size_t k = 0; k < values.size(); ++k) {
    RunConfig cfg = base;
    const std::string& v = values[k];
    if (axis == "lambda") {
      try {
        cfg.train.lambda = std::stod(v);
      } catch (const std::exception&) {
        fail(ErrorCode::kConfig, "ablate: bad lambda value " + v);
      }
    } else if (axis == "modality") {
      cfg.train.modality_probs = parse_probs(v);
    } else {
      cfg.model.adapter.variant = parse_variant(v);
    }
    cfg.validate();
    std::unique_ptr<CoGenAV> holder;
    CoGenAV* model = build_model(cfg, head, holder);
    FitOptions fo;
    if (!out_dir.empty()) fo.out_dir = out_dir / ("arm" + std::to_string(k));
    fo.run_config = to_json(cfg);
    say(quiet, "ablate " + axis + "=" + v + ": training " + std::to_string(cfg.train.steps) + " steps");
    fit(*model, corpus.train, cfg.train, fo);

    EvalConditions cond;
    cond.beam = cfg.eval.beam;
    cond.max_utterances = cfg.eval.max_utterances;
    cond.seed = cfg.train.seed;
    AblationRow row;
    row.value = v;
    row.vsr_wer = evaluate_task(Task::kVSR, *model, corpus.test, cond).value;
    cond.snr_db = cfg.eval.snr_db;
    const EvalReport noisy = evaluate_task(Task::kAVSRNoisy, *model, corpus.test, cond);
    row.avsr_noisy_wer = noisy.value;
    row.audio_only_wer = noisy.extra["audio_only_wer"].get<double>();
    cond.snr_db = std::numeric_limits<double>::quiet_NaN();
    row.sync_auc = evaluate_task(Task::kSync, *model, corpus.test, cond).value;
    say(quiet, "  vsr_wer " + std::to_string(row.vsr_wer) + "  avsr_noisy_wer " + std::to_string(row.avsr_noisy_wer) +
                   "  sync_auc " + std::to_string(row.sync_auc));
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const fs::path& path, const std::string& axis, const std::vector<AblationRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << axis << ",vsr_wer,avsr_noisy_wer,audio_only_wer,sync_auc\n";
  for (const auto& r : rows) {
    const bool quote = r.value.find(',') != std::string::npos;
    out << (quote ? "\"" + r.value + "\"" : r.value) << ',' << r.vsr_wer << ',' << r.avsr_noisy_wer << ','
        << r.audio_only_wer << ',' << r.sync_auc << '\n';
  }
}

std::vector<AblationRow> cmd_ablate(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts, "ablate");
  require(!opts.values.empty(), ErrorCode::kConfig, "ablate: empty values list");
  require_file(opts.corpus / "corpus.json", "corpus", "run `cogenav gen-corpus` first");
  require_file(opts.head, "SR head checkpoint", "run `cogenav pretrain-head` first");
  const fs::path dir = resolve_out_dir(opts, "ablate");
  prepare_out_dir(dir, opts.force);
  write_manifest(dir, "ablate", opts, cfg);
  const Corpus corpus = read_corpus(opts.corpus);
  auto rows = run_ablation(cfg, opts.axis, opts.values, corpus, opts.head, dir, opts.quiet);
  write_ablation_csv(dir / ("ablation_" + opts.axis + ".csv"), opts.axis, rows);
  say(opts.quiet, "table written to " + (dir / ("ablation_" + opts.axis + ".csv")).string());
  return rows;
}

}  // namespace cogenav
