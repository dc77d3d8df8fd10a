#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "camadapt/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw camadapt::ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommonArgs {
  std::string config_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_mode = true) {
  cmd->add_option("--config", args.config_path, "path to a key = value config file")
      ->required();
  if (with_mode)
    cmd->add_option("--mode", args.mode, "training mode")
        ->check(CLI::IsMember({"baseline", "asa", "full"}));
  cmd->add_option("--seed", args.seed, "override the run seed");
  cmd->add_option("--out", args.out_dir, "output directory");
}

camadapt::RunConfig load_config(const CommonArgs& args) {
  camadapt::RunConfig cfg = camadapt::parse_config(read_file(args.config_path));
  if (!args.mode.empty()) cfg.adapt.mode = camadapt::parse_mode(args.mode);
  if (args.seed) cfg.reseed(*args.seed);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "camadapt: unsupervised cross-camera domain adaptation on synthetic "
      "identity data"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, eval_args, synth_args;
  std::vector<double> lambdas;
  std::string ckpt_path;

  CLI::App* run = app.add_subcommand(
      "run", "pretrain, adapt and evaluate; writes history.csv, "
             "final_metrics.csv and checkpoints");
  add_common(run, run_args);

  CLI::App* sweep = app.add_subcommand(
      "sweep-lambda", "run FULL mode once per lambda; writes lambda_sweep.csv");
  add_common(sweep, sweep_args, /*with_mode=*/false);
  sweep->add_option("lambdas", lambdas, "diversity attenuation values")
      ->required();

  CLI::App* eval = app.add_subcommand(
      "eval", "re-evaluate an encoder checkpoint on the config's target domain");
  add_common(eval, eval_args, /*with_mode=*/false);
  eval->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")
      ->required();

  CLI::App* synth = app.add_subcommand(
      "synth", "emit the synthetic source/target datasets to dataset.adck");
  add_common(synth, synth_args, /*with_mode=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const camadapt::RunConfig cfg = load_config(run_args);
      camadapt::cmd_run(cfg, cfg.output_dir, &std::cout);
    } else if (sweep->parsed()) {
      const camadapt::RunConfig cfg = load_config(sweep_args);
      camadapt::cmd_sweep_lambda(cfg, lambdas, cfg.output_dir, &std::cout);
    } else if (eval->parsed()) {
      const camadapt::RunConfig cfg = load_config(eval_args);
      camadapt::cmd_eval(cfg, ckpt_path, cfg.output_dir, &std::cout);
    } else if (synth->parsed()) {
      const camadapt::RunConfig cfg = load_config(synth_args);
      camadapt::cmd_synth(cfg, cfg.output_dir);
    }
  } catch (const camadapt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
