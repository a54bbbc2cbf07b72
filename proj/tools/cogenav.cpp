// cogenav: corpus generation, SR head pretraining, joint training,
// evaluation, heatmaps and ablation sweeps.

#include <iostream>

#include <CLI11.hpp>

#include "cogenav/commands.hpp"
#include "cogenav/errors.hpp"

using namespace cogenav;

namespace {

void add_common(CLI::App* app, CommandOptions& o) {
  app->add_option("--config", o.config_path, "JSON config file");
  app->add_option("--out", o.out, "output directory (default $COGENAV_OUT_ROOT/<command>)");
  app->add_option("--seed", o.seed, "seed override");
  app->add_flag("--force", o.force, "allow writing into a non-empty output directory");
  app->add_flag("--quiet", o.quiet, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoGenAV desk-scale audio-visual synchronization toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  CommandOptions o;

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  add_common(gen, o);

  auto* pre = app.add_subcommand("pretrain-head", "pretrain and freeze the SR head");
  add_common(pre, o);
  pre->add_option("--steps", o.steps, "maximum pretraining steps");

  auto* train = app.add_subcommand("train", "joint contrastive-generative training");
  add_common(train, o);
  train->add_option("--corpus", o.corpus, "corpus directory")->required();
  train->add_option("--head", o.head, "SR head checkpoint")->required();
  train->add_option("--lambda", o.lambda, "contrastive loss weight");
  train->add_option("--steps", o.steps, "optimizer steps");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  eval->add_option("--corpus", o.corpus, "corpus directory")->required();
  eval->add_option("--task", o.task, "vsr | avsr_clean | avsr_noisy | sync | asd_lite")->required();
  eval->add_option("--snr", o.snr, "babble SNR in dB (avsr_noisy)");
  eval->add_option("--beam", o.beam, "beam size");
  eval->add_option("--split", o.split, "train | val | test");

  auto* heat = app.add_subcommand("heatmap", "export an audio-visual alignment heatmap");
  add_common(heat, o);
  heat->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  heat->add_option("--corpus", o.corpus, "corpus directory")->required();
  heat->add_option("--split", o.split, "train | val | test");
  heat->add_option("--index", o.index, "utterance index within the split");

  auto* abl = app.add_subcommand("ablate", "train and evaluate one run per value");
  add_common(abl, o);
  abl->add_option("--corpus", o.corpus, "corpus directory")->required();
  abl->add_option("--head", o.head, "SR head checkpoint")->required();
  abl->add_option("--axis", o.axis, "lambda | modality | adapter")->required();
  abl->add_option("--values", o.values, "values, e.g. 0 1 | 0.2,0.4,0.4 | none full")->required();
  abl->add_option("--steps", o.steps, "optimizer steps per arm");
  abl->add_option("--beam", o.beam, "beam size");
  abl->add_option("--snr", o.snr, "babble SNR for the noisy AVSR column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[USAGE]: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) cmd_gen_corpus(o);
    else if (*pre) cmd_pretrain_head(o);
    else if (*train) cmd_train(o);
    else if (*eval) cmd_eval(o);
    else if (*heat) cmd_heatmap(o);
    else if (*abl) cmd_ablate(o);
  } catch (const Error& e) {
    std::cerr << "error[" << error_tag(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[INTERNAL]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
