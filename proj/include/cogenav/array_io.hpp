#pragma once

// Flat binary array files used for corpus utterances.
//
// Layout (little-endian):
//   bytes 0..3   magic "CGAR"
//   byte  4      format version (1)
//   byte  5      dtype: 1 = float32, 2 = float64
//   byte  6      ndim (1..8)
//   byte  7      reserved (0)
//   ndim x u32   dimensions, outermost first
//   payload      prod(dims) values of dtype, row-major

#include <filesystem>
#include <span>
#include <vector>

#include "cogenav/tensor.hpp"

namespace cogenav {

enum class DType : unsigned char { kFloat32 = 1, kFloat64 = 2 };

struct ArrayFile {
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<double> values;
};

void write_array(const std::filesystem::path& path, DType dtype, const Shape& shape,
                 std::span<const double> values);
ArrayFile read_array(const std::filesystem::path& path);

}  // namespace cogenav
