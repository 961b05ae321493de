// rstd: train, sweep and inspect TD / RsTD compressed CIFAR-10 networks.

#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rstd/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  rstd::Precision precision = rstd::Precision::F32;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  if (config_required) c->required();
  cmd->add_option("--out", f.out, "output directory (overrides output.directory)");
  cmd->add_option("--seed", f.seed, "root seed (overrides training.seed)");
  const std::map<std::string, rstd::Precision> precisions{{"f32", rstd::Precision::F32},
                                                          {"f64", rstd::Precision::F64}};
  cmd->add_option("--precision", f.precision, "arithmetic precision")
      ->transform(CLI::CheckedTransformer(precisions, CLI::ignore_case));
}

rstd::ExperimentConfig resolve(const CommonFlags& f) {
  rstd::ExperimentConfig cfg = f.config.empty() ? rstd::ExperimentConfig{} : rstd::load_config(f.config);
  if (!f.out.empty()) cfg.output.directory = f.out;
  if (f.seed) cfg.training.seed = *f.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-decomposed and randomly shuffled tensor-decomposed CNN experiments"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train the configured network, write CSV, checkpoints, permutations");
  add_common(train, train_flags, true);
  bool quiet = false;
  train->add_flag("--quiet", quiet, "suppress per-epoch log lines");

  CommonFlags sweep_flags;
  rstd::SweepOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "train TD and RsTD variants at each rank");
  add_common(sweep, sweep_flags, true);
  sweep->add_option("--ranks", sweep_opts.ranks, "comma-separated rank list")->required()->delimiter(',');
  sweep->add_option("--workers", sweep_opts.workers, "concurrent sweep points")->check(CLI::PositiveNumber);
  sweep->add_flag("--dry-run", sweep_opts.dry_run, "compression accounting only, no training");
  sweep->add_option("--csv", sweep_opts.csv_path, "sweep CSV path (default <out>/sweep.csv)");

  CommonFlags noisy_flags;
  double dev = 0.0;
  auto* noisy = app.add_subcommand("make-noisy", "write a fixed AWGN variant of the dataset");
  add_common(noisy, noisy_flags, false);
  noisy->add_option("--dev", dev, "noise standard deviation on the [0,1] pixel scale")->required();

  std::string report_csv;
  auto* report = app.add_subcommand("report", "summarize a training or sweep CSV");
  report->add_option("csv", report_csv, "CSV written by train or sweep")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = resolve(train_flags);
      const auto data = rstd::prepare_data(cfg);
      const auto out = rstd::run_train(cfg, data, train_flags.precision, quiet ? nullptr : &std::cerr);
      std::cout << "mean_accuracy=" << rstd::format_real(out.report.mean_accuracy)
                << " std_accuracy=" << rstd::format_real(out.report.std_accuracy)
                << " r_c=" << rstd::format_real(out.accounting.ratio())
                << " params=" << out.accounting.compressed << " csv=" << out.csv_path << '\n';
    } else if (*sweep) {
      const auto cfg = resolve(sweep_flags);
      std::optional<rstd::CifarSplits> data;
      if (!sweep_opts.dry_run) data = rstd::prepare_data(cfg);
      const auto points =
          rstd::run_sweep(cfg, data ? &*data : nullptr, sweep_opts, sweep_flags.precision, &std::cerr);
      std::cout << "sweep points=" << points.size() << '\n';
    } else if (*noisy) {
      const auto cfg = resolve(noisy_flags);
      const auto seed = noisy_flags.seed.value_or(cfg.dataset.noise_seed);
      rstd::run_make_noisy(rstd::resolve_dataset_path(cfg), cfg.output.directory, dev, seed);
      std::cout << "wrote noisy dataset to " << cfg.output.directory << '\n';
    } else if (*report) {
      rstd::run_report(report_csv, std::cout);
    }
  } catch (const rstd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
