#include "rstd/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rstd/checkpoint.hpp"

namespace rstd {

using nlohmann::json;
namespace fs = std::filesystem;

// --- config parsing ---------------------------------------------------------

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
  }
}

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::uint64_t as_uint(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(path, "expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

double as_real(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::vector<std::size_t> as_uint_list(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected a list of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_uint(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

LayerCompression parse_compression(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "none") return LayerCompression::none();
    fail(path, "expected \"none\" or a compression object");
  }
  expect_object(j, path);
  check_keys(j, path, {"kind", "ranks", "shuffled", "seed", "grouping"});
  LayerCompression c;
  c.compressed = true;
  if (!j.contains("kind")) fail(join_path(path, "kind"), "required");
  try {
    c.kind = parse_topology_kind(as_string(j["kind"], join_path(path, "kind")));
  } catch (const TopologyError& e) {
    fail(join_path(path, "kind"), e.what());
  }
  if (c.kind == TopologyKind::Custom) fail(join_path(path, "kind"), "custom topologies cannot be configured");
  if (j.contains("grouping")) {
    const auto& g = j["grouping"];
    if (!g.is_array()) fail(join_path(path, "grouping"), "expected a list of mode lists");
    c.grouping.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      c.grouping.push_back(as_uint_list(g[i], join_path(path, "grouping") + "[" + std::to_string(i) + "]"));
    }
  }
  if (!j.contains("ranks")) fail(join_path(path, "ranks"), "required");
  const auto& r = j["ranks"];
  if (r.is_array()) {
    c.ranks = as_uint_list(r, join_path(path, "ranks"));
  } else {
    c.ranks = uniform_ranks(c.kind, as_uint(r, join_path(path, "ranks")), c.grouping);
  }
  if (j.contains("shuffled")) c.shuffled = as_bool(j["shuffled"], join_path(path, "shuffled"));
  if (j.contains("seed")) c.seed = as_uint(j["seed"], join_path(path, "seed"));
  // Surface rank/grouping errors at parse time with the field path.
  try {
    (void)build_topology(c.kind, {3, 3, 3, 3}, c.ranks, c.grouping);
  } catch (const TopologyError& e) {
    fail(join_path(path, "ranks"), e.what());
  }
  return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  ExperimentConfig cfg;
  expect_object(root, source);
  check_keys(root, "", {"dataset", "model", "training", "output"});

  if (root.contains("dataset")) {
    const auto& d = root["dataset"];
    expect_object(d, "dataset");
    check_keys(d, "dataset", {"path", "noise_dev", "noise_seed", "train_per_class", "test_per_class"});
    if (d.contains("path")) cfg.dataset.path = as_string(d["path"], "dataset.path");
    if (d.contains("noise_dev")) {
      cfg.dataset.noise_dev = as_real(d["noise_dev"], "dataset.noise_dev");
      if (!(cfg.dataset.noise_dev >= 0.0)) fail("dataset.noise_dev", "must be >= 0");
    }
    if (d.contains("noise_seed")) cfg.dataset.noise_seed = as_uint(d["noise_seed"], "dataset.noise_seed");
    if (d.contains("train_per_class")) {
      cfg.dataset.train_per_class = as_uint(d["train_per_class"], "dataset.train_per_class");
      if (*cfg.dataset.train_per_class == 0) fail("dataset.train_per_class", "must be >= 1");
    }
    if (d.contains("test_per_class")) {
      cfg.dataset.test_per_class = as_uint(d["test_per_class"], "dataset.test_per_class");
      if (*cfg.dataset.test_per_class == 0) fail("dataset.test_per_class", "must be >= 1");
    }
  }

  if (root.contains("model")) {
    const auto& m = root["model"];
    expect_object(m, "model");
    check_keys(m, "model", {"channels", "conv_bias", "compression", "layers"});
    if (m.contains("channels")) {
      cfg.model.channels = as_uint(m["channels"], "model.channels");
      if (cfg.model.channels == 0) fail("model.channels", "must be >= 1");
    }
    if (m.contains("conv_bias")) cfg.model.conv_bias = as_bool(m["conv_bias"], "model.conv_bias");
    if (m.contains("compression") && !m["compression"].is_null()) {
      cfg.model.compression = parse_compression(m["compression"], "model.compression");
    }
    if (m.contains("layers")) {
      const auto& l = m["layers"];
      if (!l.is_array() || l.size() != kTable1ConvLayers) {
        fail("model.layers", "expected a list of " + std::to_string(kTable1ConvLayers) + " entries");
      }
      for (std::size_t i = 0; i < l.size(); ++i) {
        cfg.model.layers.push_back(parse_compression(l[i], "model.layers[" + std::to_string(i) + "]"));
      }
      if (cfg.model.layers[0].compressed) fail("model.layers[0]", "the first conv layer is never compressed");
    }
  }

  if (root.contains("training")) {
    const auto& t = root["training"];
    expect_object(t, "training");
    check_keys(t, "training", {"base_lr", "momentum", "lr_milestones", "lr_decay_factor", "epochs",
                               "batch_size", "repetitions", "seed"});
    auto& tc = cfg.training;
    if (t.contains("base_lr")) tc.base_lr = as_real(t["base_lr"], "training.base_lr");
    if (t.contains("momentum")) tc.momentum = as_real(t["momentum"], "training.momentum");
    if (t.contains("lr_milestones")) tc.lr_milestones = as_uint_list(t["lr_milestones"], "training.lr_milestones");
    if (t.contains("lr_decay_factor")) tc.lr_decay_factor = as_real(t["lr_decay_factor"], "training.lr_decay_factor");
    if (t.contains("epochs")) tc.total_epochs = as_uint(t["epochs"], "training.epochs");
    if (t.contains("batch_size")) tc.batch_size = as_uint(t["batch_size"], "training.batch_size");
    if (t.contains("repetitions")) tc.repetitions = as_uint(t["repetitions"], "training.repetitions");
    if (t.contains("seed")) tc.seed = as_uint(t["seed"], "training.seed");
    try {
      tc.validate();
    } catch (const TrainingError& e) {
      fail("training", e.what());
    }
  }

  if (root.contains("output")) {
    const auto& o = root["output"];
    expect_object(o, "output");
    check_keys(o, "output", {"directory", "csv"});
    if (o.contains("directory")) cfg.output.directory = as_string(o["directory"], "output.directory");
    if (o.contains("csv")) cfg.output.csv = as_string(o["csv"], "output.csv");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::vector<LayerCompression> ExperimentConfig::layer_specs() const {
  if (!model.layers.empty()) return model.layers;
  if (!model.compression) return {};
  std::vector<LayerCompression> out(kTable1ConvLayers, *model.compression);
  out[0] = LayerCompression::none();
  return out;
}

Table1Options ExperimentConfig::network_options(std::uint64_t rep_seed) const {
  Table1Options o;
  o.channels = model.channels;
  o.conv_bias = model.conv_bias;
  o.seed = rep_seed;
  o.layers = layer_specs();
  return o;
}

std::string resolve_dataset_path(const ExperimentConfig& cfg) {
  if (!cfg.dataset.path.empty()) return cfg.dataset.path;
  if (const char* env = std::getenv("RSTD_DATA_DIR"); env && *env) return env;
  throw ConfigError("dataset.path: required (or set RSTD_DATA_DIR)");
}

std::uint64_t train_noise_seed(std::uint64_t seed) { return seed; }
std::uint64_t test_noise_seed(std::uint64_t seed) { return splitmix64(seed); }

CifarSplits prepare_data(const ExperimentConfig& cfg) {
  auto data = load_cifar10(resolve_dataset_path(cfg));
  if (cfg.dataset.noise_dev > 0.0) {
    data.train = add_awgn(data.train, cfg.dataset.noise_dev, train_noise_seed(cfg.dataset.noise_seed));
    data.test = add_awgn(data.test, cfg.dataset.noise_dev, test_noise_seed(cfg.dataset.noise_seed));
  }
  if (cfg.dataset.train_per_class) data.train = subset_per_class(data.train, *cfg.dataset.train_per_class);
  if (cfg.dataset.test_per_class) data.test = subset_per_class(data.test, *cfg.dataset.test_per_class);
  return data;
}

double ParamAccounting::ratio() const { return compression_ratio(compressed, uncompressed); }

ParamAccounting account_parameters(const Table1Options& options) {
  auto net = build_table1_network<float>(options);
  auto twin_options = options;
  twin_options.layers.clear();
  auto twin = build_table1_network<float>(twin_options);
  return {net.trainable_param_count(), twin.trainable_param_count()};
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string format_ranks(const std::vector<std::size_t>& ranks) {
  std::string out;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (i) out += ':';
    out += std::to_string(ranks[i]);
  }
  return out;
}

// --- train ------------------------------------------------------------------

namespace {

std::string output_file(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? name : (fs::path(cfg.output.directory) / p).string();
}

template <typename T>
TrainOutcome train_impl(const ExperimentConfig& cfg, const CifarSplits& data, std::ostream* log) {
  fs::create_directories(cfg.output.directory);
  TrainOutcome out;
  out.accounting = account_parameters(cfg.network_options(repetition_seed(cfg.training.seed, 0)));

  const auto started = std::chrono::steady_clock::now();
  auto& report = out.report;
  for (std::size_t r = 0; r < cfg.training.repetitions; ++r) {
    const auto rep_seed = repetition_seed(cfg.training.seed, r);
    auto net = build_table1_network<T>(cfg.network_options(rep_seed));
    net.check_shapes({1, kCifarChannels, kCifarSide, kCifarSide});
    for (std::size_t i = 0; i < net.size(); ++i) {
      const auto* f = dynamic_cast<const FactorizedConvLayer<T>*>(&net.layer(i));
      if (!f || !f->shuffle()) continue;
      const auto path = output_file(cfg, "rep" + std::to_string(r) + "_" + f->name() + ".rspm");
      save_permutation(*f->shuffle(), path);
      out.permutations.push_back(path);
    }
    report.trainable_params = net.trainable_param_count();
    auto records = train_repetition(net, data.train, data.test, cfg.training, rep_seed, r,
                                    [&](const EpochRecord& e) {
                                      if (!log) return;
                                      *log << "rep " << e.repetition << " epoch " << e.epoch << " loss "
                                           << format_real(e.train_loss) << " acc "
                                           << format_real(e.test_accuracy) << std::endl;
                                    });
    report.final_accuracy.push_back(records.empty() ? evaluate(net, data.test) : records.back().test_accuracy);
    report.epochs.insert(report.epochs.end(), records.begin(), records.end());
    const auto ckpt = output_file(cfg, "rep" + std::to_string(r) + ".ckpt");
    save_checkpoint(net, ckpt);
    out.checkpoints.push_back(ckpt);
  }
  double sum = 0.0;
  for (auto a : report.final_accuracy) sum += a;
  report.mean_accuracy = sum / static_cast<double>(report.final_accuracy.size());
  double sq = 0.0;
  for (auto a : report.final_accuracy) sq += (a - report.mean_accuracy) * (a - report.mean_accuracy);
  report.std_accuracy = std::sqrt(sq / static_cast<double>(report.final_accuracy.size()));
  report.compression_ratio = out.accounting.ratio();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  out.csv_path = output_file(cfg, cfg.output.csv);
  std::ofstream csv(out.csv_path, std::ios::trunc);
  if (!csv) throw Error("cannot write " + out.csv_path);
  csv << kTrainCsvHeader << '\n';
  for (const auto& e : out.report.epochs) {
    csv << e.epoch << ',' << e.repetition << ',' << format_real(e.train_loss) << ','
        << format_real(e.test_accuracy) << '\n';
  }
  csv << "summary," << cfg.training.repetitions << ",," << format_real(out.report.mean_accuracy) << '\n';
  if (!csv) throw Error("write failed for " + out.csv_path);
  return out;
}

}  // namespace

TrainOutcome run_train(const ExperimentConfig& cfg, const CifarSplits& data, Precision precision,
                       std::ostream* log) {
  return precision == Precision::F64 ? train_impl<double>(cfg, data, log)
                                     : train_impl<float>(cfg, data, log);
}

// --- sweep ------------------------------------------------------------------

std::string sweep_row(const SweepPoint& p) {
  std::string row = std::string(to_string(p.kind)) + ',' + format_ranks(p.ranks) + ',' +
                    format_real(p.compression_ratio) + ',' + (p.shuffled ? "true" : "false") + ',';
  if (p.mean_accuracy) row += format_real(*p.mean_accuracy);
  row += ',';
  if (p.std_accuracy) row += format_real(*p.std_accuracy);
  return row;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const CifarSplits* data,
                                  const SweepOptions& opts, Precision precision, std::ostream* log) {
  if (opts.ranks.empty()) throw ConfigError("sweep: rank list is empty");
  if (!cfg.model.compression) throw ConfigError("model.compression: required for a sweep (gives the kind)");
  if (!opts.dry_run && !data) throw Error("sweep: training requires a dataset");
  const auto base = *cfg.model.compression;

  std::vector<ExperimentConfig> configs;
  std::vector<SweepPoint> points;
  for (auto rank : opts.ranks) {
    if (rank == 0) throw ConfigError("sweep: ranks must be >= 1");
    for (bool shuffled : {false, true}) {
      auto c = cfg;
      c.model.layers.clear();
      auto spec = base;
      spec.ranks = uniform_ranks(base.kind, rank, base.grouping);
      spec.shuffled = shuffled;
      c.model.compression = spec;
      const auto acc = account_parameters(c.network_options(repetition_seed(c.training.seed, 0)));
      points.push_back({base.kind, spec.ranks, shuffled, acc.ratio(), std::nullopt, std::nullopt});
      configs.push_back(std::move(c));
    }
  }

  const auto csv_path = opts.csv_path.empty() ? output_file(cfg, "sweep.csv") : opts.csv_path;
  if (const auto parent = fs::path(csv_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw Error("cannot write " + csv_path);
  csv << kSweepCsvHeader << '\n';

  auto run_point = [&](std::size_t i) {
    if (opts.dry_run) return;
    const auto& c = configs[i];
    const NetworkFactory<float> f32 = [&](std::uint64_t s) { return build_table1_network<float>(c.network_options(s)); };
    const NetworkFactory<double> f64 = [&](std::uint64_t s) { return build_table1_network<double>(c.network_options(s)); };
    const auto report = precision == Precision::F64 ? train(f64, data->train, data->test, c.training)
                                                    : train(f32, data->train, data->test, c.training);
    points[i].mean_accuracy = report.mean_accuracy;
    points[i].std_accuracy = report.std_accuracy;
  };

  const std::size_t workers = std::max<std::size_t>(1, opts.workers);
  for (std::size_t start = 0; start < points.size(); start += workers) {
    const auto end = std::min(points.size(), start + workers);
    std::vector<std::future<void>> jobs;
    for (std::size_t i = start; i < end; ++i) {
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, run_point, i));
    }
    for (std::size_t i = start; i < end; ++i) {
      try {
        jobs[i - start].get();
      } catch (...) {
        csv.flush();
        throw;
      }
      csv << sweep_row(points[i]) << '\n';
      csv.flush();
      if (log) *log << sweep_row(points[i]) << '\n';
    }
  }
  return points;
}

// --- make-noisy -------------------------------------------------------------

void run_make_noisy(const std::string& source_dir, const std::string& out_dir, double dev,
                    std::uint64_t seed) {
  if (!(dev >= 0.0)) throw ConfigError("make-noisy: dev must be >= 0");
  const fs::path src(source_dir);
  const fs::path dst(out_dir);
  std::error_code ec;
  fs::create_directories(dst, ec);
  if (ec) throw Error("cannot create output directory " + out_dir + ": " + ec.message());

  std::vector<Dataset> parts;
  for (const auto& name : cifar10_train_files()) parts.push_back(read_cifar10_file((src / name).string()));
  const auto train = add_awgn(concat(parts), dev, train_noise_seed(seed));
  std::size_t offset = 0;
  for (std::size_t f = 0; f < parts.size(); ++f) {
    std::vector<std::size_t> idx(parts[f].size());
    for (auto& i : idx) i = offset++;
    auto b = gather<float>(train, idx);
    write_cifar10_file({std::move(b.images), std::move(b.labels)}, (dst / cifar10_train_files()[f]).string());
  }
  const auto test = add_awgn(read_cifar10_file((src / cifar10_test_file()).string()), dev, test_noise_seed(seed));
  write_cifar10_file(test, (dst / cifar10_test_file()).string());

  json sidecar = {
      {"dev", dev},
      {"seed", seed},
      {"train_seed", train_noise_seed(seed)},
      {"test_seed", test_noise_seed(seed)},
      {"source", source_dir},
      {"note", "stored pixels are round(255*v) clamped to [0,255]; the in-memory AWGN variant "
               "is not clamped, so the two differ at the clamp tails"}};
  std::ofstream side(dst / "awgn.json", std::ios::trunc);
  if (!side) throw Error("cannot write sidecar in " + out_dir);
  side << sidecar.dump(2) << '\n';
}

// --- report -----------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void run_report(const std::string& csv_path, std::ostream& out) {
  std::ifstream in(csv_path);
  if (!in) throw Error("cannot open " + csv_path);
  std::string header;
  std::getline(in, header);
  std::string line;
  if (header == kTrainCsvHeader) {
    std::map<std::size_t, std::pair<std::size_t, std::string>> last;  // rep -> (epoch, acc)
    std::string summary;
    while (std::getline(in, line)) {
      const auto cells = split_csv(line);
      if (cells.size() != 4) throw Error(csv_path + ": malformed row '" + line + "'");
      if (cells[0] == "summary") {
        summary = cells[3];
        continue;
      }
      last[std::stoul(cells[1])] = {std::stoul(cells[0]), cells[3]};
    }
    for (const auto& [rep, v] : last) {
      out << "repetition " << rep << ": final epoch " << v.first << ", test accuracy " << v.second << '\n';
    }
    out << "mean test accuracy: " << (summary.empty() ? "n/a" : summary) << '\n';
  } else if (header == kSweepCsvHeader) {
    out << std::left << std::setw(10) << "kind" << std::setw(14) << "ranks" << std::setw(14) << "r_c"
        << std::setw(10) << "shuffled" << std::setw(14) << "mean_acc" << "std_acc" << '\n';
    while (std::getline(in, line)) {
      const auto cells = split_csv(line);
      if (cells.size() != 6) throw Error(csv_path + ": malformed row '" + line + "'");
      out << std::left << std::setw(10) << cells[0] << std::setw(14) << cells[1] << std::setw(14)
          << cells[2] << std::setw(10) << cells[3] << std::setw(14) << (cells[4].empty() ? "-" : cells[4])
          << (cells[5].empty() ? "-" : cells[5]) << '\n';
    }
  } else {
    throw Error(csv_path + ": unrecognized CSV header '" + header + "'");
  }
}

}  // namespace rstd
