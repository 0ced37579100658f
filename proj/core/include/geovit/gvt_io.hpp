#pragma once

// ".gvt" binary tensor files:
//   bytes 0-3   magic "GVT1"
//   byte  4     dtype code (0 = f32, 1 = f64, 2 = i32, 3 = u8)
//   byte  5     rank
//   bytes 6-7   zero padding
//   rank x u32  dimensions, little-endian
//   payload     row-major elements, little-endian

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "geovit/tensor.hpp"

namespace geovit {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kI32 = 2, kU8 = 3 };

template <typename E>
struct DTypeOf;
template <>
struct DTypeOf<float> {
  static constexpr DType value = DType::kF32;
};
template <>
struct DTypeOf<double> {
  static constexpr DType value = DType::kF64;
};
template <>
struct DTypeOf<std::int32_t> {
  static constexpr DType value = DType::kI32;
};
template <>
struct DTypeOf<std::uint8_t> {
  static constexpr DType value = DType::kU8;
};

template <typename E>
struct GvtArray {
  Shape shape;
  std::vector<E> values;
};

template <typename E>
std::vector<std::uint8_t> encode_gvt(const Shape& shape, std::span<const E> values);
/// Throws FormatError on bad magic, dtype mismatch, or truncated payload.
template <typename E>
GvtArray<E> decode_gvt(std::span<const std::uint8_t> bytes);

template <typename E>
void write_gvt(const std::filesystem::path& path, const Shape& shape, std::span<const E> values);
template <typename E>
GvtArray<E> read_gvt(const std::filesystem::path& path);

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  write_gvt<T>(path, t.shape(), t.data());
}

template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path) {
  GvtArray<T> a = read_gvt<T>(path);
  return Tensor<T>(std::move(a.shape), std::move(a.values));
}

}  // namespace geovit
