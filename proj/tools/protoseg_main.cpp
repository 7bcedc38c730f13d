#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "protoseg/dataset.hpp"
#include "protoseg/error.hpp"
#include "protoseg/evaluation.hpp"
#include "protoseg/network.hpp"
#include "protoseg/trainer.hpp"

namespace {

using protoseg::Error;
using protoseg::ErrorKind;

// Parses "8,16,16,16" style channel lists.
template <std::size_t N>
std::array<int, N> parse_channels(const std::string& text, const std::string& key) {
  std::array<int, N> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= N) throw Error(ErrorKind::ConfigError, key + " expects " +
                                                        std::to_string(N) + " values");
    try {
      out[i++] = std::stoi(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, key + " has a non-integer entry: " + item);
    }
  }
  if (i != N)
    throw Error(ErrorKind::ConfigError,
                key + " expects " + std::to_string(N) + " values, got " +
                    std::to_string(i));
  return out;
}

struct TrainArgs {
  protoseg::TrainConfig config;
  std::string mode = "episodic";
  std::string fusion = "concat";
  int input_size = 32;
  std::string encoder_channels = "8,16,16,16";
  std::string convs_per_block = "1,1,1,1";
  std::string decoder_channels = "16,16";
  std::string denoise_channels = "8,8";
  std::string resume;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  int k = 1;
  std::uint64_t episodes = 500;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double test_fraction = 1.0 / 3.0;
  std::string subset = "test";
  std::string report;
  std::string overlays;
};

struct GenerateArgs {
  int classes = 12;
  int per_class = 10;
  int size = 64;
  std::uint64_t seed = 7;
  std::string out;
};

int run_generate(const GenerateArgs& a) {
  protoseg::ClassDataset ds = protoseg::generate_shapes_dataset(
      a.classes, a.per_class, a.size, a.size, a.seed, a.out);
  std::printf("generated %zu classes x %d pairs (%dx%d, seed %llu) under %s\n",
              ds.classes.size(), a.per_class, a.size, a.size,
              static_cast<unsigned long long>(a.seed), a.out.c_str());
  for (const auto& c : ds.classes) std::printf("  %s\n", c.c_str());
  return 0;
}

int run_train(TrainArgs& a) {
  protoseg::TrainConfig& cfg = a.config;
  if (a.mode == "episodic")
    cfg.mode = protoseg::TrainMode::episodic;
  else if (a.mode == "regular")
    cfg.mode = protoseg::TrainMode::regular;
  else
    throw Error(ErrorKind::ConfigError, "mode must be episodic or regular");

  if (a.fusion == "concat")
    cfg.model.fusion = protoseg::FusionMode::concat;
  else if (a.fusion == "cosine")
    cfg.model.fusion = protoseg::FusionMode::cosine;
  else
    throw Error(ErrorKind::ConfigError, "model.fusion must be concat or cosine");

  if (a.input_size < 4 || a.input_size % 4 != 0)
    throw Error(ErrorKind::ConfigError,
                "model.input_size must be a positive multiple of 4");
  cfg.model.input_h = cfg.model.input_w = a.input_size;
  cfg.model.encoder_channels =
      parse_channels<4>(a.encoder_channels, "model.encoder_channels");
  cfg.model.convs_per_block =
      parse_channels<4>(a.convs_per_block, "model.convs_per_block");
  cfg.model.decoder_channels =
      parse_channels<2>(a.decoder_channels, "model.decoder_channels");
  cfg.model.denoise_channels =
      parse_channels<2>(a.denoise_channels, "model.denoise_channels");

  cfg.validate();
  const auto ckpt = protoseg::train(cfg, a.resume);
  std::printf("training finished; checkpoint written to %s\n", ckpt.string().c_str());
  return 0;
}

int run_eval(const EvalArgs& a) {
  protoseg::CheckpointExtra extra;
  auto model = protoseg::load_checkpoint(a.checkpoint, &extra);
  const auto& mc = model->config();

  protoseg::ClassDataset ds =
      protoseg::load_class_dataset(a.data, mc.input_h, mc.input_w);

  std::vector<std::string> allowed;
  if (a.subset == "all") {
    allowed = ds.classes;
  } else {
    protoseg::DatasetSplit split =
        protoseg::split_classes(ds, a.test_fraction, a.split_seed);
    if (a.subset == "test")
      allowed = split.test_classes;
    else if (a.subset == "train")
      allowed = split.train_classes;
    else
      throw Error(ErrorKind::ConfigError, "subset must be test, train, or all");
  }

  protoseg::EvalReport report = protoseg::evaluate(
      *model, ds, allowed, a.k, a.episodes, a.seed, a.overlays);
  std::fputs(protoseg::format_eval_summary(report).c_str(), stdout);
  if (!a.report.empty()) {
    protoseg::write_eval_report(report, a.report);
    std::printf("report written to %s\n", a.report.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot segmentation with episodic training and a denoising "
               "surrogate task"};
  app.require_subcommand(1);
  // Config handling lives on the root app: CLI11 only reads config files
  // during the root parse, so a set_config on a subcommand never fires.
  // Sections name subcommands ([train], [eval]); dotted option names stay
  // whole keys because the parent separator is moved off '.'.
  app.set_config("--config", "",
                 "Config file (INI; command-line flags override it)");
  app.get_config_formatter_base()->parentSeparator('/');
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenerateArgs gen;
  CLI::App* cmd_gen = app.add_subcommand(
      "generate", "Write a synthetic shapes corpus with exact masks");
  cmd_gen->fallthrough();
  cmd_gen->add_option("--classes", gen.classes, "Number of shape classes")
      ->capture_default_str();
  cmd_gen->add_option("--per-class", gen.per_class, "Image/mask pairs per class")
      ->capture_default_str();
  cmd_gen->add_option("--size", gen.size, "Square image size in pixels")
      ->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  cmd_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  CLI::App* cmd_train =
      app.add_subcommand("train", "Train a model (episodic or regular mode)");
  cmd_train->fallthrough();
  cmd_train->add_option("--mode", tr.mode, "episodic | regular")
      ->capture_default_str();
  cmd_train->add_option("--data", tr.config.data_root,
                        "Labeled dataset root (class directories)")
      ->envname("PROTOSEG_DATA_ROOT")
      ->required();
  cmd_train->add_option("--k", tr.config.k, "Support shots per episode")
      ->capture_default_str();
  cmd_train->add_option("--u", tr.config.u,
                        "Unlabeled images per step for the surrogate task")
      ->capture_default_str();
  cmd_train->add_option("--lambda", tr.config.lambda,
                        "Surrogate loss weight in the joint objective")
      ->capture_default_str();
  cmd_train->add_option("--iterations", tr.config.iterations, "Training steps")
      ->capture_default_str();
  cmd_train
      ->add_option("--learning_rate,--lr", tr.config.learning_rate,
                   "Adam learning rate")
      ->capture_default_str();
  cmd_train->add_option("--seed", tr.config.seed, "Run seed (all randomness)")
      ->capture_default_str();
  cmd_train->add_option("--split_seed", tr.config.split_seed,
                        "Class split seed (kept fixed across run seeds)")
      ->capture_default_str();
  cmd_train->add_option("--test_fraction", tr.config.test_fraction,
                        "Fraction of classes held out")
      ->capture_default_str();
  cmd_train->add_option("--batch_size", tr.config.batch_size,
                        "Images per step in regular mode")
      ->capture_default_str();
  cmd_train->add_option("--episodes_per_step", tr.config.episodes_per_step,
                        "Episodes averaged per gradient step")
      ->capture_default_str();
  cmd_train->add_option("--checkpoint", tr.config.checkpoint_path,
                        "Final checkpoint path")
      ->capture_default_str();
  cmd_train->add_option("--log", tr.config.log_path,
                        "Step log path (one JSON line per step)");
  cmd_train->add_option("--eval.every", tr.config.eval_every,
                        "Steps between held-out evals (0 = off)")
      ->capture_default_str();
  cmd_train->add_option("--eval.episodes", tr.config.eval_episodes,
                        "Episodes per periodic eval")
      ->capture_default_str();
  cmd_train->add_option("--checkpoint_every", tr.config.checkpoint_every,
                        "Steps between extra checkpoints (0 = off)")
      ->capture_default_str();
  cmd_train->add_option("--resume", tr.resume,
                        "Checkpoint to resume from (bit-exact continuation)");
  cmd_train->add_option("--surrogate.sigma", tr.config.sigma,
                        "Gaussian noise standard deviation")
      ->capture_default_str();
  cmd_train->add_option("--surrogate.copies", tr.config.copies,
                        "Corrupted copies per unlabeled image")
      ->capture_default_str();
  cmd_train->add_option("--surrogate.pool_dir", tr.config.pool_dir,
                        "Directory of unlabeled images");
  cmd_train->add_option("--model.input_size", tr.input_size,
                        "Square input size (multiple of 4)")
      ->capture_default_str();
  cmd_train->add_option("--model.channels", tr.config.model.channels,
                        "Input channels")
      ->capture_default_str();
  cmd_train->add_option("--model.encoder_channels", tr.encoder_channels,
                        "Encoder widths, 4 comma-separated values")
      ->capture_default_str();
  cmd_train->add_option("--model.convs_per_block", tr.convs_per_block,
                        "Convolutions per encoder block, 4 values")
      ->capture_default_str();
  cmd_train->add_option("--model.decoder_channels", tr.decoder_channels,
                        "Decoder widths, 2 values")
      ->capture_default_str();
  cmd_train->add_option("--model.denoise_channels", tr.denoise_channels,
                        "Denoise head widths, 2 values")
      ->capture_default_str();
  cmd_train->add_option("--model.fusion", tr.fusion,
                        "Prototype/query fusion: concat | cosine")
      ->capture_default_str();

  EvalArgs ev;
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "Score a checkpoint over seeded episodes");
  cmd_eval->fallthrough();
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint to load")
      ->required();
  cmd_eval->add_option("--data", ev.data, "Labeled dataset root")
      ->envname("PROTOSEG_DATA_ROOT")
      ->required();
  cmd_eval->add_option("--k", ev.k, "Support shots per episode")
      ->capture_default_str();
  cmd_eval->add_option("--episodes", ev.episodes, "Episodes to score")
      ->capture_default_str();
  cmd_eval->add_option("--seed", ev.seed, "Evaluation seed")->capture_default_str();
  cmd_eval->add_option("--split_seed", ev.split_seed,
                       "Class split seed (must match training)")
      ->capture_default_str();
  cmd_eval->add_option("--test_fraction", ev.test_fraction,
                       "Fraction of classes held out")
      ->capture_default_str();
  cmd_eval->add_option("--on", ev.subset, "Class subset: test | train | all")
      ->capture_default_str();
  cmd_eval->add_option("--report", ev.report, "Write the full report (JSON) here");
  cmd_eval->add_option("--overlays", ev.overlays,
                       "Write query|truth|prediction panels to this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cmd_gen) return run_generate(gen);
    if (*cmd_train) return run_train(tr);
    if (*cmd_eval) return run_eval(ev);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
