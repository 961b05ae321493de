#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rstd/tensor.hpp"

namespace rstd {

class DataError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kCifarChannels = 3;
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = kCifarChannels * kCifarSide * kCifarSide;  // 3072
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixels;                     // 3073
inline constexpr std::size_t kCifarClasses = 10;

/// Labelled images, (count, 3, 32, 32), pixels scaled to [0, 1] when clean.
struct Dataset {
  DenseTensor<float> images;
  std::vector<int> labels;
  double noise_dev = 0.0;                   // 0 for a clean set
  std::optional<std::uint64_t> noise_seed;  // set once AWGN was applied

  std::size_t size() const { return labels.size(); }
  std::string provenance() const;
};

/// Training batch files data_batch_1..5.bin plus test_batch.bin.
std::vector<std::string> cifar10_train_files();
std::string cifar10_test_file();

/// Parses one binary batch file: records of 1 label byte + 3072 channel-major pixels.
Dataset read_cifar10_file(const std::string& path);
Dataset parse_cifar10_records(const std::vector<std::uint8_t>& bytes, const std::string& what);

struct CifarSplits {
  Dataset train;
  Dataset test;
};

CifarSplits load_cifar10(const std::string& directory);

/// Writes records, re-quantizing pixels with round(255 * v) clamped to [0, 255].
void write_cifar10_file(const Dataset& d, const std::string& path);
std::vector<std::uint8_t> encode_cifar10_records(const Dataset& d);

Dataset concat(const std::vector<Dataset>& parts);

/// First `per_class` examples of every label, in original order.
Dataset subset_per_class(const Dataset& d, std::size_t per_class);

/// Adds one fixed N(0, dev^2) draw to every pixel; no clipping.
Dataset add_awgn(const Dataset& d, double dev, std::uint64_t seed);

/// Example order for one epoch cut into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t count, std::size_t batch_size,
                                              std::uint64_t epoch_seed);

template <typename T>
struct Batch {
  DenseTensor<T> images;
  std::vector<int> labels;
};

template <typename T>
Batch<T> gather(const Dataset& d, const std::vector<std::size_t>& indices);

}  // namespace rstd
