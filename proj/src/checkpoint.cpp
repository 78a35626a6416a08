#include "binary_io.hpp"
#include "floodseg/model.hpp"

namespace floodseg {

namespace {
constexpr std::string_view kMagic = "FSNW";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<unsigned char> encode_checkpoint(const SegNet& net) {
  const auto& c = net.config();
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(c.in_channels));
  w.u32(static_cast<std::uint32_t>(c.base_width));
  w.u32(static_cast<std::uint32_t>(c.skip_strides.size()));
  for (int s : c.skip_strides) w.u32(static_cast<std::uint32_t>(s));
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    w.u8(static_cast<std::uint8_t>(p.name.size()));
    w.bytes(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(p.data);
  }
  return std::move(w.buffer());
}

SegNet decode_checkpoint(std::span<const unsigned char> bytes, const std::optional<SegNetConfig>& expected) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kMagic) throw FormatError("not an FSNW checkpoint (bad magic)");
  if (r.u16() != kVersion) throw FormatError("unsupported FSNW version");
  SegNetConfig cfg;
  cfg.in_channels = static_cast<int>(r.u32());
  cfg.base_width = static_cast<int>(r.u32());
  const auto n_skips = r.u32();
  if (n_skips > 3) throw FormatError("FSNW config lists too many skip strides");
  cfg.skip_strides.assign(n_skips, 0);
  for (auto& s : cfg.skip_strides) s = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  if (cfg.in_channels > 4096 || cfg.base_width > 4096) throw FormatError("FSNW config out of range");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("FSNW config invalid: ") + e.what());
  }
  if (expected && !(*expected == cfg)) {
    throw ConfigError("checkpoint config does not match the requested network config");
  }
  SegNet net(cfg);
  auto& params = net.mutable_params();
  if (r.u32() != params.size()) throw FormatError("FSNW tensor count does not match architecture");
  for (auto& p : params) {
    const auto len = r.u8();
    if (r.bytes(len) != p.name) throw FormatError("FSNW tensor name mismatch, expected '" + p.name + "'");
    const auto ndim = r.u32();
    if (ndim != p.shape.size()) throw FormatError("FSNW tensor rank mismatch for '" + p.name + "'");
    for (int d : p.shape) {
      if (r.u32() != static_cast<std::uint32_t>(d)) {
        throw FormatError("FSNW tensor shape mismatch for '" + p.name + "'");
      }
    }
    r.f32s(p.data);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after FSNW payload");
  return net;
}

void save_checkpoint(const SegNet& net, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(net));
}

SegNet load_checkpoint(const std::filesystem::path& path, const std::optional<SegNetConfig>& expected) {
  return decode_checkpoint(detail::read_file(path), expected);
}

std::uint64_t checksum(const SegNet& net) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char b : encode_checkpoint(net)) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace floodseg
