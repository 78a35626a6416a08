#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "floodseg/raster.hpp"

namespace floodseg {

namespace detail {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

namespace {

constexpr std::string_view kRasterMagic = "FSR1";
constexpr std::string_view kMaskMagic = "FSM1";
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::vector<unsigned char> encode_raster(const Raster& raster) {
  if (raster.band_count() == 0) throw FormatError("cannot encode a raster without bands");
  detail::ByteWriter w;
  w.bytes(kRasterMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(raster.width()));
  w.u32(static_cast<std::uint32_t>(raster.height()));
  w.u32(static_cast<std::uint32_t>(raster.band_count()));
  w.f32(raster.resolution_m());
  for (const auto& b : raster.bands()) {
    if (b.name.empty() || b.name.size() > 255) {
      throw FormatError("band name length must be 1..255: '" + b.name + "'");
    }
    w.u8(static_cast<std::uint8_t>(b.name.size()));
    w.bytes(b.name);
  }
  for (const auto& b : raster.bands()) w.f32s(b.data);
  return std::move(w.buffer());
}

Raster decode_raster(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kRasterMagic) throw FormatError("not an FSR raster (bad magic)");
  if (const auto v = r.u16(); v != kVersion) {
    throw FormatError("unsupported FSR version " + std::to_string(v));
  }
  const auto width = r.u32();
  const auto height = r.u32();
  const auto n_bands = r.u32();
  const float res = r.f32();
  if (width == 0 || height == 0 || width > (1U << 20) || height > (1U << 20)) {
    throw FormatError("FSR header has invalid dimensions");
  }
  if (n_bands == 0) throw FormatError("FSR header declares zero bands");
  if (!(res > 0.0F)) throw FormatError("FSR header has non-positive resolution");
  std::vector<Band> bands(n_bands);
  for (auto& b : bands) {
    const auto len = r.u8();
    if (len == 0) throw FormatError("FSR band with empty name");
    b.name = r.bytes(len);
  }
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (auto& b : bands) {
    b.data.resize(n);
    r.f32s(b.data);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after FSR payload");
  try {
    return {static_cast<int>(width), static_cast<int>(height), res, std::move(bands)};
  } catch (const SchemaError& e) {
    throw FormatError(std::string("FSR content invalid: ") + e.what());
  }
}

std::vector<unsigned char> encode_mask(const ClassMask& mask) {
  detail::ByteWriter w;
  w.bytes(kMaskMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(mask.width()));
  w.u32(static_cast<std::uint32_t>(mask.height()));
  for (Code c : mask.cells()) w.u8(static_cast<std::uint8_t>(c));
  return std::move(w.buffer());
}

ClassMask decode_mask(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kMaskMagic) throw FormatError("not an FSM mask (bad magic)");
  if (const auto v = r.u16(); v != kVersion) {
    throw FormatError("unsupported FSM version " + std::to_string(v));
  }
  const auto width = r.u32();
  const auto height = r.u32();
  if (width == 0 || height == 0 || width > (1U << 20) || height > (1U << 20)) {
    throw FormatError("FSM header has invalid dimensions");
  }
  const std::size_t n = static_cast<std::size_t>(width) * height;
  auto payload = r.raw(n);
  if (r.remaining() != 0) throw FormatError("trailing bytes after FSM payload");
  std::vector<Code> codes(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (payload[i] > 3) throw FormatError("FSM cell holds unknown code " + std::to_string(payload[i]));
    codes[i] = static_cast<Code>(payload[i]);
  }
  return {static_cast<int>(width), static_cast<int>(height), std::move(codes)};
}

void write_raster(const Raster& raster, const std::filesystem::path& path) {
  detail::write_file(path, encode_raster(raster));
}

Raster read_raster(const std::filesystem::path& path) { return decode_raster(detail::read_file(path)); }

void write_mask(const ClassMask& mask, const std::filesystem::path& path) {
  detail::write_file(path, encode_mask(mask));
}

ClassMask read_mask(const std::filesystem::path& path) { return decode_mask(detail::read_file(path)); }

}  // namespace floodseg
