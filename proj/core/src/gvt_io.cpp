#include "geovit/gvt_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "geovit/errors.hpp"

namespace geovit {
namespace {

constexpr std::uint8_t kMagic[4] = {'G', 'V', 'T', '1'};
constexpr std::size_t kHeaderBytes = 8;

static_assert(std::endian::native == std::endian::little, "gvt I/O assumes a little-endian host");

}  // namespace

template <typename E>
std::vector<std::uint8_t> encode_gvt(const Shape& shape, std::span<const E> values) {
  if (shape.size() > 255) throw FormatError("gvt: rank " + std::to_string(shape.size()) + " exceeds 255");
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("gvt: shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  std::vector<std::uint8_t> out(kHeaderBytes + 4 * shape.size() + sizeof(E) * values.size());
  std::memcpy(out.data(), kMagic, 4);
  out[4] = static_cast<std::uint8_t>(DTypeOf<E>::value);
  out[5] = static_cast<std::uint8_t>(shape.size());
  std::uint8_t* p = out.data() + kHeaderBytes;
  for (std::size_t d : shape) {
    if (d > UINT32_MAX) throw FormatError("gvt: dimension exceeds 32 bits");
    const auto v = static_cast<std::uint32_t>(d);
    std::memcpy(p, &v, 4);
    p += 4;
  }
  if (!values.empty()) std::memcpy(p, values.data(), sizeof(E) * values.size());
  return out;
}

template <typename E>
GvtArray<E> decode_gvt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("gvt: bad magic");
  }
  if (bytes[4] != static_cast<std::uint8_t>(DTypeOf<E>::value)) {
    throw FormatError("gvt: dtype code " + std::to_string(bytes[4]) + ", expected " +
                      std::to_string(static_cast<int>(DTypeOf<E>::value)));
  }
  const std::size_t rank = bytes[5];
  if (bytes.size() < kHeaderBytes + 4 * rank) throw FormatError("gvt: truncated header");
  GvtArray<E> out;
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t d;
    std::memcpy(&d, p, 4);
    p += 4;
    out.shape.push_back(d);
  }
  const std::size_t n = shape_numel(out.shape);
  const std::size_t payload = bytes.size() - kHeaderBytes - 4 * rank;
  if (payload != n * sizeof(E)) {
    throw FormatError("gvt: payload of " + std::to_string(payload) + " bytes, expected " +
                      std::to_string(n * sizeof(E)) + " for shape " + shape_to_string(out.shape));
  }
  out.values.resize(n);
  if (n) std::memcpy(out.values.data(), p, n * sizeof(E));
  return out;
}

template <typename E>
void write_gvt(const std::filesystem::path& path, const Shape& shape, std::span<const E> values) {
  const auto bytes = encode_gvt<E>(shape, values);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

template <typename E>
GvtArray<E> read_gvt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_gvt<E>(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

#define GEOVIT_INSTANTIATE_GVT(E)                                                          \
  template std::vector<std::uint8_t> encode_gvt<E>(const Shape&, std::span<const E>);      \
  template GvtArray<E> decode_gvt<E>(std::span<const std::uint8_t>);                       \
  template void write_gvt<E>(const std::filesystem::path&, const Shape&, std::span<const E>); \
  template GvtArray<E> read_gvt<E>(const std::filesystem::path&);

GEOVIT_INSTANTIATE_GVT(float)
GEOVIT_INSTANTIATE_GVT(double)
GEOVIT_INSTANTIATE_GVT(std::int32_t)
GEOVIT_INSTANTIATE_GVT(std::uint8_t)

#undef GEOVIT_INSTANTIATE_GVT

}  // namespace geovit
