#include <doctest.h>

#include <vector>

#include "rstd/trainer.hpp"
#include "support.hpp"

using namespace rstd;

TEST_CASE("one Nesterov step from rest") {
  std::vector<double> p{0.0}, v{0.0};
  const std::vector<double> g{1.0};
  sgd_nesterov_step<double>(p, g, v, 0.1, 0.9);
  CHECK(v[0] == doctest::Approx(-0.1));
  CHECK(p[0] == doctest::Approx(-0.19));
  sgd_nesterov_step<double>(p, g, v, 0.1, 0.9);
  CHECK(v[0] == doctest::Approx(-0.19));
  CHECK(p[0] == doctest::Approx(-0.19 - 0.171 - 0.1));
}

TEST_CASE("non-finite gradients name the parameter") {
  std::vector<double> p{0.0, 0.0}, v{0.0, 0.0};
  const std::vector<double> g{1.0, std::nan("")};
  CHECK_THROWS_WITH_AS(sgd_nesterov_step<double>(p, g, v, 0.1, 0.9, "conv3.core1"),
                       doctest::Contains("conv3.core1"), TrainingError);
  CHECK(p[0] == 0.0);
}

TEST_CASE("step schedule") {
  const auto cfg = TrainConfig{};
  CHECK(lr_schedule(0, cfg) == doctest::Approx(0.1));
  CHECK(lr_schedule(79, cfg) == doctest::Approx(0.1));
  CHECK(lr_schedule(80, cfg) == doctest::Approx(0.01));
  CHECK(lr_schedule(110, cfg) == doctest::Approx(0.001));
  const auto desk = TrainConfig::desk();
  CHECK(lr_schedule(12, desk) == doctest::Approx(0.01));
  CHECK(lr_schedule(19, desk) == doctest::Approx(0.001));
}

TEST_CASE("config validation") {
  auto c = TrainConfig::desk();
  CHECK_NOTHROW(c.validate());
  c.lr_milestones = {17, 12};
  CHECK_THROWS_AS(c.validate(), TrainingError);
  c = TrainConfig::desk();
  c.lr_milestones = {12, 25};
  CHECK_THROWS_AS(c.validate(), TrainingError);
  c = TrainConfig::desk();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), TrainingError);
  c = TrainConfig::desk();
  c.lr_decay_factor = 1.0;
  CHECK_THROWS_AS(c.validate(), TrainingError);
}

TEST_CASE("argmax accuracy with ties to the lower class") {
  DenseTensor<float> logits({3, 3}, {1, 2, 0, 5, 5, 1, 0, 0, 3});
  const std::vector<int> labels{1, 1, 2};
  CHECK(count_correct(logits, labels) == 2);
}

namespace {

Dataset tiny_dataset(std::uint64_t seed, std::size_t per_file) {
  testing::TempDir dir;
  testing::write_synthetic_cifar(dir.path(), per_file, 10, seed);
  return load_cifar10(dir.str()).train;
}

}  // namespace

TEST_CASE("a small network overfits one batch") {
  const auto data = tiny_dataset(3, 4);  // 20 examples
  Table1Options opt;
  opt.channels = 8;
  opt.seed = 1;
  auto net = build_table1_network<float>(opt);
  NesterovOptimizer<float> opt_state(net);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = gather<float>(data, idx);
  const double first = train_step(net, opt_state, batch, 0.05, 0.9);
  double last = first;
  for (int i = 0; i < 60; ++i) last = train_step(net, opt_state, batch, 0.05, 0.9);
  CHECK(last < 0.3 * first);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = tiny_dataset(4, 8);
  auto cfg = TrainConfig::desk();
  cfg.total_epochs = 2;
  cfg.lr_milestones = {1};
  cfg.batch_size = 16;
  cfg.repetitions = 2;
  cfg.seed = 5;
  const NetworkFactory<float> factory = [](std::uint64_t s) {
    Table1Options o;
    o.channels = 4;
    o.seed = s;
    o.layers.assign(kTable1ConvLayers, LayerCompression::rstd(TopologyKind::TR, {1, 1, 1, 1}));
    o.layers[0] = LayerCompression::none();
    return build_table1_network<float>(o);
  };
  const auto a = train(factory, data, data, cfg, 1000);
  const auto b = train(factory, data, data, cfg, 1000);
  REQUIRE(a.epochs.size() == 4);
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
    CHECK(a.epochs[i].test_accuracy == b.epochs[i].test_accuracy);
  }
  CHECK(a.epochs[0].train_loss != a.epochs[2].train_loss);  // repetitions differ
  REQUIRE(a.compression_ratio);
  CHECK(*a.compression_ratio == doctest::Approx(static_cast<double>(a.trainable_params) / 1000.0));
}
