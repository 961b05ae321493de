#include "rstd/shuffle.hpp"

#include <fstream>
#include <iterator>

#include "byteio.hpp"

namespace rstd {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

}  // namespace detail

Permutation::Permutation(std::vector<std::uint64_t> forward, std::optional<std::uint64_t> seed)
    : forward_(std::move(forward)), seed_(seed) {
  const auto n = forward_.size();
  if (n == 0) throw ParseError("permutation must have n >= 1");
  inverse_.assign(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto f = forward_[k];
    if (f >= n) throw ParseError("permutation index " + std::to_string(f) + " out of range");
    if (inverse_[f] != n) throw ParseError("permutation repeats index " + std::to_string(f));
    inverse_[f] = k;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::uint64_t> fwd(n);
  for (std::size_t i = 0; i < n; ++i) fwd[i] = i;
  return Permutation(std::move(fwd));
}

Permutation Permutation::from_seed(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return fisher_yates_permutation(n, rng, seed);
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    if (forward_[i] != i) return false;
  }
  return true;
}

template <typename T>
DenseTensor<T> apply_shuffle(const Permutation& p, const DenseTensor<T>& t) {
  if (p.size() != t.size()) {
    throw TensorError("apply_shuffle: permutation size " + std::to_string(p.size()) +
                      " vs tensor size " + std::to_string(t.size()));
  }
  std::vector<T> out(t.size());
  const auto fwd = p.forward();
  const auto in = t.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[fwd[k]] = in[k];
  return DenseTensor<T>(t.shape(), std::move(out));
}

template <typename T>
DenseTensor<T> apply_inverse_shuffle(const Permutation& p, const DenseTensor<T>& t) {
  if (p.size() != t.size()) {
    throw TensorError("apply_inverse_shuffle: permutation size " + std::to_string(p.size()) +
                      " vs tensor size " + std::to_string(t.size()));
  }
  std::vector<T> out(t.size());
  const auto fwd = p.forward();
  const auto in = t.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = in[fwd[k]];
  return DenseTensor<T>(t.shape(), std::move(out));
}

template DenseTensor<float> apply_shuffle(const Permutation&, const DenseTensor<float>&);
template DenseTensor<double> apply_shuffle(const Permutation&, const DenseTensor<double>&);
template DenseTensor<float> apply_inverse_shuffle(const Permutation&, const DenseTensor<float>&);
template DenseTensor<double> apply_inverse_shuffle(const Permutation&, const DenseTensor<double>&);

namespace {
constexpr std::string_view kMagic = "RSPM";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize_permutation(const Permutation& p) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u64(p.size());
  for (auto f : p.forward()) w.u64(f);
  return w.take();
}

Permutation parse_permutation(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "permutation");
  if (r.bytes(4) != kMagic) r.fail("bad magic");
  if (const auto v = r.u16(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  const auto n = r.u64();
  if (n == 0) r.fail("n must be >= 1");
  if (n > r.remaining() / 8) r.fail("payload shorter than n=" + std::to_string(n) + " indices");
  std::vector<std::uint64_t> fwd(n);
  for (auto& f : fwd) f = r.u64();
  if (r.remaining() != 0) r.fail("trailing bytes after payload");
  return Permutation(std::move(fwd));
}

void save_permutation(const Permutation& p, const std::string& path) {
  detail::write_file(path, serialize_permutation(p));
}

Permutation load_permutation(const std::string& path) {
  return parse_permutation(detail::read_file(path));
}

}  // namespace rstd
