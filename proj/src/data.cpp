#include "rstd/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "byteio.hpp"
#include "rstd/rng.hpp"
#include "rstd/shuffle.hpp"

namespace rstd {

std::string Dataset::provenance() const {
  if (!noise_seed) return "clean";
  std::ostringstream os;
  os << "awgn(dev=" << noise_dev << ",seed=" << *noise_seed << ")";
  return os.str();
}

std::vector<std::string> cifar10_train_files() {
  std::vector<std::string> out;
  for (int i = 1; i <= 5; ++i) out.push_back("data_batch_" + std::to_string(i) + ".bin");
  return out;
}

std::string cifar10_test_file() { return "test_batch.bin"; }

Dataset parse_cifar10_records(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw DataError(what + ": length " + std::to_string(bytes.size()) +
                    " is not a positive multiple of " + std::to_string(kCifarRecordBytes));
  }
  const auto count = bytes.size() / kCifarRecordBytes;
  std::vector<float> pixels(count * kCifarPixels);
  std::vector<int> labels(count);
  for (std::size_t r = 0; r < count; ++r) {
    const auto* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= kCifarClasses) {
      throw DataError(what + ": record " + std::to_string(r) + " has label byte " +
                      std::to_string(rec[0]));
    }
    labels[r] = rec[0];
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      pixels[r * kCifarPixels + p] = static_cast<float>(rec[1 + p]) / 255.0f;
    }
  }
  return {DenseTensor<float>({count, kCifarChannels, kCifarSide, kCifarSide}, std::move(pixels)),
          std::move(labels)};
}

Dataset read_cifar10_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw DataError("missing CIFAR-10 file " + path);
  return parse_cifar10_records(detail::read_file(path), path);
}

CifarSplits load_cifar10(const std::string& directory) {
  const std::filesystem::path dir(directory);
  std::vector<Dataset> parts;
  for (const auto& name : cifar10_train_files()) parts.push_back(read_cifar10_file((dir / name).string()));
  return {concat(parts), read_cifar10_file((dir / cifar10_test_file()).string())};
}

std::vector<std::uint8_t> encode_cifar10_records(const Dataset& d) {
  std::vector<std::uint8_t> out(d.size() * kCifarRecordBytes);
  const auto px = d.images.data();
  for (std::size_t r = 0; r < d.size(); ++r) {
    auto* rec = out.data() + r * kCifarRecordBytes;
    rec[0] = static_cast<std::uint8_t>(d.labels[r]);
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      const double v = std::round(255.0 * static_cast<double>(px[r * kCifarPixels + p]));
      rec[1 + p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

void write_cifar10_file(const Dataset& d, const std::string& path) {
  detail::write_file(path, encode_cifar10_records(d));
}

Dataset concat(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw DataError("concat of zero datasets");
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& p : parts) {
    if (p.images.order() != 4 || shape_product(std::span(p.images.shape()).subspan(1)) != kCifarPixels) {
      throw DataError("concat: image shape " + shape_to_string(p.images.shape()));
    }
    pixels.insert(pixels.end(), p.images.data().begin(), p.images.data().end());
    labels.insert(labels.end(), p.labels.begin(), p.labels.end());
  }
  const auto count = labels.size();
  Dataset out{DenseTensor<float>({count, kCifarChannels, kCifarSide, kCifarSide}, std::move(pixels)),
              std::move(labels)};
  out.noise_dev = parts.front().noise_dev;
  out.noise_seed = parts.front().noise_seed;
  return out;
}

Dataset subset_per_class(const Dataset& d, std::size_t per_class) {
  if (per_class == 0) throw DataError("subset needs at least one example per class");
  std::vector<std::size_t> taken(kCifarClasses, 0);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto& t = taken[static_cast<std::size_t>(d.labels[i])];
    if (t < per_class) {
      ++t;
      keep.push_back(i);
    }
  }
  auto b = gather<float>(d, keep);
  Dataset out{std::move(b.images), std::move(b.labels)};
  out.noise_dev = d.noise_dev;
  out.noise_seed = d.noise_seed;
  return out;
}

Dataset add_awgn(const Dataset& d, double dev, std::uint64_t seed) {
  if (!(dev >= 0.0)) throw DataError("noise deviation must be >= 0");
  Dataset out = d;
  out.noise_dev = dev;
  out.noise_seed = seed;
  if (dev == 0.0) return out;
  Rng rng(seed);
  for (auto& v : out.images.mutable_data()) v += static_cast<float>(dev * rng.normal());
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                              std::uint64_t epoch_seed) {
  if (batch_size == 0) throw DataError("batch size must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  if (count == 0) return out;
  const auto perm = Permutation::from_seed(count, epoch_seed);
  const auto order = perm.forward();
  for (std::size_t start = 0; start < count; start += batch_size) {
    const auto end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

template <typename T>
Batch<T> gather(const Dataset& d, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("gather of an empty index list");
  const auto sample = shape_product(std::span(d.images.shape()).subspan(1));
  std::vector<T> px(indices.size() * sample);
  std::vector<int> labels(indices.size());
  const auto src = d.images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    if (i >= d.size()) throw DataError("example index " + std::to_string(i) + " out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * sample), sample,
                px.begin() + static_cast<std::ptrdiff_t>(k * sample));
    labels[k] = d.labels[i];
  }
  Shape shape = d.images.shape();
  shape[0] = indices.size();
  return {DenseTensor<T>(std::move(shape), std::move(px)), std::move(labels)};
}

template Batch<float> gather(const Dataset&, const std::vector<std::size_t>&);
template Batch<double> gather(const Dataset&, const std::vector<std::size_t>&);

}  // namespace rstd
