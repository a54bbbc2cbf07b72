#include "cogenav/array_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cogenav/errors.hpp"

namespace cogenav {

static_assert(std::endian::native == std::endian::little, "array files assume a little-endian host");

namespace {
constexpr std::array<char, 4> kMagic{'C', 'G', 'A', 'R'};
}

void write_array(const std::filesystem::path& path, DType dtype, const Shape& shape,
                 std::span<const double> values) {
  require(!shape.empty() && shape.size() <= 8, ErrorCode::kShape, "write_array: rank must be 1..8");
  require(numel(shape) == values.size(), ErrorCode::kShape, "write_array: value count does not match shape");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  const unsigned char head[4] = {1, static_cast<unsigned char>(dtype), static_cast<unsigned char>(shape.size()), 0};
  out.write(reinterpret_cast<const char*>(head), 4);
  for (int d : shape) {
    const std::uint32_t d32 = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&d32), sizeof(d32));
  }
  if (dtype == DType::kFloat64) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    std::vector<float> f(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  require(out.good(), ErrorCode::kIo, "write failed: " + path.string());
}

ArrayFile read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open array file: " + path.string());
  std::array<char, 4> magic{};
  unsigned char head[4] = {};
  in.read(magic.data(), 4);
  in.read(reinterpret_cast<char*>(head), 4);
  require(in.good() && magic == kMagic, ErrorCode::kFormat, "not a CGAR array file: " + path.string());
  require(head[0] == 1, ErrorCode::kFormat, "unsupported array format version in " + path.string());
  require(head[1] == 1 || head[1] == 2, ErrorCode::kFormat, "unknown dtype in " + path.string());
  require(head[2] >= 1 && head[2] <= 8, ErrorCode::kFormat, "bad rank in " + path.string());
  ArrayFile a;
  a.dtype = static_cast<DType>(head[1]);
  for (int i = 0; i < head[2]; ++i) {
    std::uint32_t d = 0;
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    a.shape.push_back(static_cast<int>(d));
  }
  const std::size_t n = numel(a.shape);
  if (a.dtype == DType::kFloat64) {
    a.values.resize(n);
    in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    std::vector<float> f(n);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
    a.values.assign(f.begin(), f.end());
  }
  require(in.good(), ErrorCode::kFormat, "truncated array file: " + path.string());
  return a;
}

}  // namespace cogenav
