#include "rstd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace rstd {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw TrainingError("base_lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw TrainingError("momentum must lie in [0, 1)");
  if (!(lr_decay_factor > 1.0)) throw TrainingError("lr_decay_factor must be > 1");
  if (batch_size == 0) throw TrainingError("batch_size must be >= 1");
  if (repetitions == 0) throw TrainingError("repetitions must be >= 1");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) {
      throw TrainingError("lr_milestones must be strictly increasing");
    }
    if (lr_milestones[i] >= total_epochs && total_epochs > 0) {
      throw TrainingError("lr milestone " + std::to_string(lr_milestones[i]) +
                          " is not below total_epochs " + std::to_string(total_epochs));
    }
  }
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.lr_milestones = {12, 17};
  c.total_epochs = 20;
  c.repetitions = 1;
  return c;
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  const auto passed = std::count_if(cfg.lr_milestones.begin(), cfg.lr_milestones.end(),
                                    [&](std::size_t m) { return m <= epoch; });
  return cfg.base_lr / std::pow(cfg.lr_decay_factor, static_cast<double>(passed));
}

template <typename T>
void sgd_nesterov_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity,
                       double lr, double momentum, std::string_view name) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw TrainingError("optimizer buffers misaligned for " + std::string(name));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient in " + std::string(name) + " at element " + std::to_string(i));
    }
  }
  const T mu = static_cast<T>(momentum);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] - step * grads[i];
    params[i] += mu * velocity[i] - step * grads[i];
  }
}

template <typename T>
NesterovOptimizer<T>::NesterovOptimizer(Network<T>& net) : net_(&net) {
  for (const auto& p : net.parameters()) velocity_.emplace_back(p.value->size(), T{0});
}

template <typename T>
void NesterovOptimizer<T>::step(double lr, double momentum) {
  auto params = net_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_nesterov_step<T>(params[i].value->mutable_data(), params[i].grad->data(), velocity_[i], lr,
                         momentum, params[i].name);
  }
}

template <typename T>
std::size_t count_correct(const DenseTensor<T>& logits, std::span<const int> labels) {
  const auto classes = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto row = logits.data().subspan(r * classes, classes);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[r]) ++correct;
  }
  return correct;
}

template <typename T>
double evaluate(Network<T>& net, const Dataset& test, std::size_t batch_size) {
  if (test.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < test.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(test.size(), start + batch_size); ++i) idx.push_back(i);
    const auto b = gather<T>(test, idx);
    correct += count_correct(net.forward(b.images, Phase::Eval), b.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

template <typename T>
double train_step(Network<T>& net, NesterovOptimizer<T>& opt, const Batch<T>& batch, double lr,
                  double momentum) {
  const auto logits = net.forward(batch.images, Phase::Train);
  auto loss = softmax_cross_entropy(logits, batch.labels);
  if (!std::isfinite(loss.loss)) throw TrainingError("non-finite training loss");
  net.backward(loss.dlogits);
  opt.step(lr, momentum);
  return static_cast<double>(loss.loss);
}

template <typename T>
std::vector<EpochRecord> train_repetition(Network<T>& net, const Dataset& train,
                                          const Dataset& test, const TrainConfig& cfg,
                                          std::uint64_t rep_seed, std::size_t repetition,
                                          const EpochCallback& on_epoch) {
  cfg.validate();
  NesterovOptimizer<T> opt(net);
  std::vector<EpochRecord> records;
  for (std::size_t epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    double loss_sum = 0.0;
    for (const auto& idx : batches(train.size(), cfg.batch_size, epoch_seed(rep_seed, epoch))) {
      const auto b = gather<T>(train, idx);
      loss_sum += train_step(net, opt, b, lr, cfg.momentum) * static_cast<double>(idx.size());
    }
    EpochRecord rec{epoch, repetition, loss_sum / static_cast<double>(train.size()), evaluate(net, test)};
    if (on_epoch) on_epoch(rec);
    records.push_back(rec);
  }
  return records;
}

template <typename T>
TrainReport train(const NetworkFactory<T>& factory, const Dataset& train, const Dataset& test,
                  const TrainConfig& cfg, std::optional<std::size_t> reference_params,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    const auto rep_seed = repetition_seed(cfg.seed, r);
    auto net = factory(rep_seed);
    report.trainable_params = net.trainable_param_count();
    auto records = train_repetition(net, train, test, cfg, rep_seed, r, on_epoch);
    report.final_accuracy.push_back(records.empty() ? evaluate(net, test) : records.back().test_accuracy);
    report.epochs.insert(report.epochs.end(), records.begin(), records.end());
  }
  double sum = 0.0;
  for (auto a : report.final_accuracy) sum += a;
  report.mean_accuracy = sum / static_cast<double>(report.final_accuracy.size());
  double sq = 0.0;
  for (auto a : report.final_accuracy) sq += (a - report.mean_accuracy) * (a - report.mean_accuracy);
  report.std_accuracy = std::sqrt(sq / static_cast<double>(report.final_accuracy.size()));
  if (reference_params) report.compression_ratio = compression_ratio(report.trainable_params, *reference_params);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

#define RSTD_INSTANTIATE(T)                                                                      \
  template void sgd_nesterov_step(std::span<T>, std::span<const T>, std::span<T>, double, double, \
                                  std::string_view);                                             \
  template class NesterovOptimizer<T>;                                                           \
  template std::size_t count_correct(const DenseTensor<T>&, std::span<const int>);               \
  template double evaluate(Network<T>&, const Dataset&, std::size_t);                            \
  template double train_step(Network<T>&, NesterovOptimizer<T>&, const Batch<T>&, double, double); \
  template std::vector<EpochRecord> train_repetition(Network<T>&, const Dataset&, const Dataset&, \
                                                     const TrainConfig&, std::uint64_t,          \
                                                     std::size_t, const EpochCallback&);         \
  template TrainReport train(const NetworkFactory<T>&, const Dataset&, const Dataset&,           \
                             const TrainConfig&, std::optional<std::size_t>,                     \
                             const EpochCallback&);

RSTD_INSTANTIATE(float)
RSTD_INSTANTIATE(double)
#undef RSTD_INSTANTIATE

}  // namespace rstd
