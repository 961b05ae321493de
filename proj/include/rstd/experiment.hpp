#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rstd/data.hpp"
#include "rstd/nn.hpp"
#include "rstd/trainer.hpp"

namespace rstd {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DatasetSection {
  std::string path;  // falls back to $RSTD_DATA_DIR
  double noise_dev = 0.0;
  std::uint64_t noise_seed = 0;
  std::optional<std::size_t> train_per_class;
  std::optional<std::size_t> test_per_class;
};

struct ModelSection {
  std::size_t channels = 32;
  bool conv_bias = false;
  /// Spec shared by conv layers 2..7; `layers` overrides it when non-empty.
  std::optional<LayerCompression> compression;
  std::vector<LayerCompression> layers;
};

struct OutputSection {
  std::string directory = "out";
  std::string csv = "train.csv";
};

enum class Precision { F32, F64 };

/**
 * JSON experiment description. Sections: dataset, model, training, output;
 * unknown keys anywhere are rejected. See README for the full schema.
 */
struct ExperimentConfig {
  DatasetSection dataset;
  ModelSection model;
  TrainConfig training = TrainConfig::desk();
  OutputSection output;

  /// Per-layer spec list for the reference network (7 entries).
  std::vector<LayerCompression> layer_specs() const;
  Table1Options network_options(std::uint64_t rep_seed) const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::string& path);

/// Dataset path from the config or RSTD_DATA_DIR; throws naming dataset.path.
std::string resolve_dataset_path(const ExperimentConfig& cfg);

/// Loads CIFAR-10, applies the configured AWGN variant, then per-class subsetting.
CifarSplits prepare_data(const ExperimentConfig& cfg);

/// AWGN seeds of the two splits derived from one noise seed.
std::uint64_t train_noise_seed(std::uint64_t seed);
std::uint64_t test_noise_seed(std::uint64_t seed);

/// Trainable parameter counts of a configured network and its uncompressed twin.
struct ParamAccounting {
  std::size_t compressed = 0;
  std::size_t uncompressed = 0;
  double ratio() const;
};
ParamAccounting account_parameters(const Table1Options& options);

/// Header of the training CSV.
inline constexpr const char* kTrainCsvHeader = "epoch,repetition,train_loss,test_accuracy";
/// Header of the sweep CSV.
inline constexpr const char* kSweepCsvHeader = "kind,ranks,r_c,shuffled,mean_accuracy,std_accuracy";

std::string format_real(double v);
std::string format_ranks(const std::vector<std::size_t>& ranks);

struct TrainOutcome {
  TrainReport report;
  ParamAccounting accounting;
  std::string csv_path;
  std::vector<std::string> checkpoints;
  std::vector<std::string> permutations;
};

/// Trains per the config; writes the CSV, one checkpoint per repetition and the permutation files.
TrainOutcome run_train(const ExperimentConfig& cfg, const CifarSplits& data, Precision precision,
                       std::ostream* log = nullptr);

struct SweepPoint {
  TopologyKind kind;
  std::vector<std::size_t> ranks;
  bool shuffled;
  double compression_ratio;
  std::optional<double> mean_accuracy;
  std::optional<double> std_accuracy;
};

std::string sweep_row(const SweepPoint& p);

struct SweepOptions {
  std::vector<std::size_t> ranks;
  std::size_t workers = 1;
  bool dry_run = false;  // accounting only, no training
  std::string csv_path;
};

/**
 * For each rank, a TD and an RsTD variant of the configured compression kind.
 * Rows are written in order as points finish; a failing point flushes what is
 * done and rethrows.
 */
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const CifarSplits* data,
                                  const SweepOptions& opts, Precision precision,
                                  std::ostream* log = nullptr);

/// Writes the AWGN variant of every CIFAR-10 file plus `awgn.json` into `out_dir`.
void run_make_noisy(const std::string& source_dir, const std::string& out_dir, double dev,
                    std::uint64_t seed);

/// Summarizes a training or sweep CSV.
void run_report(const std::string& csv_path, std::ostream& out);

}  // namespace rstd
