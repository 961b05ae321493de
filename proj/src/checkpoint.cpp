#include "rstd/checkpoint.hpp"

#include <map>

#include "byteio.hpp"

namespace rstd {

namespace {

constexpr std::string_view kMagic = "RSTD";
constexpr std::uint16_t kVersion = 1;
constexpr std::string_view kSeedSuffix = ".shuffle_seed";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool is_buffer_entry(const std::string& name) {
  return ends_with(name, ".running_mean") || ends_with(name, ".running_var") ||
         ends_with(name, kSeedSuffix);
}

template <typename T>
std::vector<CheckpointEntry> checkpoint_entries(Network<T>& net) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : net.state()) {
    out.push_back({p.name, p.value->shape(), std::vector<float>(p.value->data().begin(), p.value->data().end())});
  }
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto* f = dynamic_cast<const FactorizedConvLayer<T>*>(&net.layer(i));
    if (!f || !f->shuffle()) continue;
    const auto seed = f->shuffle()->seed();
    if (!seed) throw Error(f->name() + ": shuffle permutation has no seed to reference");
    std::vector<float> chunks;
    for (int k = 0; k < 4; ++k) chunks.push_back(static_cast<float>((*seed >> (16 * k)) & 0xFFFF));
    out.push_back({f->name() + std::string(kSeedSuffix), {4}, std::move(chunks)});
  }
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const std::vector<CheckpointEntry>& entries) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw Error("checkpoint entry name too long");
    if (e.shape.empty() || e.shape.size() > 0xFF) throw Error("checkpoint entry order out of range");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (auto v : e.values) w.f32(v);
  }
  return w.take();
}

std::vector<CheckpointEntry> parse_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(4) != kMagic) r.fail("bad magic");
  if (const auto v = r.u16(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  const auto count = r.u32();
  std::vector<CheckpointEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.bytes(r.u16());
    const auto order = r.u8();
    if (order == 0) r.fail("entry '" + e.name + "' has order 0");
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < order; ++k) {
      const auto d = r.u32();
      if (d == 0) r.fail("entry '" + e.name + "' has a zero dimension");
      e.shape.push_back(d);
      n *= d;
    }
    if (n > r.remaining() / 4) r.fail("truncated payload of entry '" + e.name + "'");
    e.values.resize(n);
    for (auto& v : e.values) v = r.f32();
    out.push_back(std::move(e));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last entry");
  return out;
}

template <typename T>
void apply_checkpoint(Network<T>& net, const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) {
    if (!by_name.emplace(e.name, &e).second) throw Error("checkpoint repeats entry " + e.name);
  }
  std::size_t used = 0;
  for (auto& p : net.state()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw Error("checkpoint lacks entry " + p.name);
    if (it->second->shape != p.value->shape()) {
      throw Error("checkpoint entry " + p.name + " has shape " + shape_to_string(it->second->shape) +
                  ", network expects " + shape_to_string(p.value->shape()));
    }
    auto dst = p.value->mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
    ++used;
  }
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto* f = dynamic_cast<FactorizedConvLayer<T>*>(&net.layer(i));
    if (!f) continue;
    const auto it = by_name.find(f->name() + std::string(kSeedSuffix));
    if (it == by_name.end()) {
      if (f->shuffle()) throw Error("checkpoint lacks the permutation seed of " + f->name());
      continue;
    }
    if (it->second->values.size() != 4) throw Error("malformed permutation seed for " + f->name());
    std::uint64_t seed = 0;
    for (int k = 0; k < 4; ++k) {
      seed |= static_cast<std::uint64_t>(it->second->values[static_cast<std::size_t>(k)]) << (16 * k);
    }
    f->set_shuffle(Permutation::from_seed(f->kernel_dims().size(), seed));
    ++used;
  }
  if (used != entries.size()) throw Error("checkpoint has entries that match no network parameter");
}

std::size_t checkpoint_trainable_count(const std::vector<CheckpointEntry>& entries) {
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (!is_buffer_entry(e.name)) n += e.values.size();
  }
  return n;
}

template <typename T>
void save_checkpoint(Network<T>& net, const std::string& path) {
  detail::write_file(path, serialize_checkpoint(checkpoint_entries(net)));
}

template <typename T>
void load_checkpoint(Network<T>& net, const std::string& path) {
  apply_checkpoint(net, parse_checkpoint(detail::read_file(path)));
}

#define RSTD_INSTANTIATE(T)                                                               \
  template std::vector<CheckpointEntry> checkpoint_entries(Network<T>&);                  \
  template void apply_checkpoint(Network<T>&, const std::vector<CheckpointEntry>&);       \
  template void save_checkpoint(Network<T>&, const std::string&);                         \
  template void load_checkpoint(Network<T>&, const std::string&);

RSTD_INSTANTIATE(float)
RSTD_INSTANTIATE(double)
#undef RSTD_INSTANTIATE

}  // namespace rstd
