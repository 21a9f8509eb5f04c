#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "fas/tensor.hpp"

namespace fas {

namespace {

constexpr std::array<char, 4> kTensorMagic{'F', 'T', 'N', 'S'};
// Guards against reading garbage as an enormous allocation.
constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError("truncated tensor stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic.data(), kTensorMagic.size());
  put_u64(out, t.rank());
  for (std::size_t extent : t.shape()) put_u64(out, extent);
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("failed writing tensor stream");
}

Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in) throw IoError("truncated tensor stream");
  if (magic != kTensorMagic) throw DataError("bad tensor magic bytes");
  const std::uint64_t rank = get_u64(in);
  if (rank > kMaxRank) throw DataError("tensor rank " + std::to_string(rank) + " exceeds limit");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& extent : shape) {
    extent = get_u64(in);
    count *= extent;
    if (count > kMaxElements) throw DataError("tensor too large");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = std::bit_cast<double>(get_u64(in));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace fas
