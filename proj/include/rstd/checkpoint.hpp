#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rstd/nn.hpp"

namespace rstd {

/**
 * Checkpoint layout (little-endian):
 *
 *   "RSTD" | u16 version = 1 | u32 entry count
 *   per entry: u16 name length | UTF-8 name | u8 order | order x u32 dims |
 *              product(dims) x f32 payload
 *
 * Entries are the trainable parameters, then batch-norm running statistics,
 * then one `<layer>.shuffle_seed` entry per shuffled layer: four values, each
 * holding 16 bits of the 64-bit permutation seed (low bits first), so that the
 * permutation is regenerated exactly on load.
 */
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// True for running statistics and permutation references.
bool is_buffer_entry(const std::string& name);

template <typename T>
std::vector<CheckpointEntry> checkpoint_entries(Network<T>& net);

std::vector<std::uint8_t> serialize_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Copies every entry into the matching parameter; names and shapes must agree exactly.
template <typename T>
void apply_checkpoint(Network<T>& net, const std::vector<CheckpointEntry>& entries);

template <typename T>
void save_checkpoint(Network<T>& net, const std::string& path);
template <typename T>
void load_checkpoint(Network<T>& net, const std::string& path);

/// Element count of the trainable entries.
std::size_t checkpoint_trainable_count(const std::vector<CheckpointEntry>& entries);

}  // namespace rstd
