#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rstd/data.hpp"
#include "rstd/nn.hpp"

namespace rstd {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  std::vector<std::size_t> lr_milestones{80, 110};
  double lr_decay_factor = 10.0;
  std::size_t total_epochs = 120;
  std::size_t batch_size = 128;
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;

  /// Milestones strictly increasing and below total_epochs; decay > 1.
  void validate() const;

  /// 20 epochs with decays at 12 and 17, one repetition.
  static TrainConfig desk();
};

/// base_lr / decay^(number of milestones <= epoch)
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

/**
 * Nesterov momentum in look-ahead form:
 *   v <- mu * v - lr * g
 *   p <- p + mu * v - lr * g
 */
template <typename T>
void sgd_nesterov_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity,
                       double lr, double momentum, std::string_view name = "parameter");

/// Velocity buffers for every trainable parameter of one network.
template <typename T>
class NesterovOptimizer {
 public:
  explicit NesterovOptimizer(Network<T>& net);
  void step(double lr, double momentum);

 private:
  Network<T>* net_;
  std::vector<std::vector<T>> velocity_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t repetition = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> final_accuracy;  // one per repetition
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over repetitions
  std::size_t trainable_params = 0;
  std::optional<double> compression_ratio;
  double wall_seconds = 0.0;
};

/// Fraction of examples whose argmax logit equals the label (eval mode).
template <typename T>
double evaluate(Network<T>& net, const Dataset& test, std::size_t batch_size = 256);

/// Rows whose argmax equals the label; ties go to the lower class.
template <typename T>
std::size_t count_correct(const DenseTensor<T>& logits, std::span<const int> labels);

/// Mean loss of one training step (forward, backward, update).
template <typename T>
double train_step(Network<T>& net, NesterovOptimizer<T>& opt, const Batch<T>& batch, double lr,
                  double momentum);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// One repetition on an already built network; returns its epoch records.
template <typename T>
std::vector<EpochRecord> train_repetition(Network<T>& net, const Dataset& train,
                                          const Dataset& test, const TrainConfig& cfg,
                                          std::uint64_t rep_seed, std::size_t repetition,
                                          const EpochCallback& on_epoch = {});

/// Builds the network of repetition r from repetition_seed(cfg.seed, r).
template <typename T>
using NetworkFactory = std::function<Network<T>(std::uint64_t rep_seed)>;

/**
 * Full protocol: cfg.repetitions independent runs, each with a fresh network
 * and derived seeds, accuracies averaged. `reference_params` is N_u of the
 * uncompressed twin; when given the report carries r_c.
 */
template <typename T>
TrainReport train(const NetworkFactory<T>& factory, const Dataset& train, const Dataset& test,
                  const TrainConfig& cfg, std::optional<std::size_t> reference_params = std::nullopt,
                  const EpochCallback& on_epoch = {});

}  // namespace rstd
