#include "floodseg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace floodseg {

Raster::Raster(int width, int height, float resolution_m, std::vector<Band> bands)
    : width_(width), height_(height), resolution_m_(resolution_m), bands_(std::move(bands)) {
  if (width < 1 || height < 1) throw SchemaError("raster dimensions must be positive");
  if (!(resolution_m > 0.0F) || !std::isfinite(resolution_m)) {
    throw SchemaError("raster resolution must be positive");
  }
  std::unordered_set<std::string> seen;
  for (const auto& b : bands_) {
    if (b.data.size() != pixel_count()) {
      throw SchemaError("band '" + b.name + "' has " + std::to_string(b.data.size()) +
                        " values, expected " + std::to_string(pixel_count()));
    }
    if (!seen.insert(b.name).second) throw SchemaError("duplicate band name '" + b.name + "'");
  }
}

bool Raster::has_band(std::string_view name) const noexcept {
  return std::any_of(bands_.begin(), bands_.end(), [&](const Band& b) { return b.name == name; });
}

std::span<const float> Raster::band(std::string_view name) const {
  for (const auto& b : bands_) {
    if (b.name == name) return b.data;
  }
  throw SchemaError("raster has no band '" + std::string(name) + "'");
}

Raster select_bands(const Raster& raster, std::span<const std::string> names) {
  std::vector<Band> out;
  out.reserve(names.size());
  for (const auto& n : names) {
    auto data = raster.band(n);
    out.push_back({n, {data.begin(), data.end()}});
  }
  return {raster.width(), raster.height(), raster.resolution_m(), std::move(out)};
}

namespace {

struct ClipRange {
  const char* band;
  float lo;
  float hi;
};

Raster clip_and_scale(const Raster& in, std::span<const ClipRange> ranges) {
  std::vector<Band> out;
  for (const auto& r : ranges) {
    auto src = in.band(r.band);
    Band b{r.band, std::vector<float>(src.size())};
    const float span = r.hi - r.lo;
    std::transform(src.begin(), src.end(), b.data.begin(), [&](float v) {
      const float c = std::clamp(v, r.lo, r.hi);
      return (c - r.lo) / span;
    });
    out.push_back(std::move(b));
  }
  return {in.width(), in.height(), in.resolution_m(), std::move(out)};
}

}  // namespace

Raster normalize_s1(const Raster& s1) {
  static constexpr ClipRange kRanges[] = {{"VV", -20.0F, 0.0F}, {"VH", -30.0F, 0.0F}};
  return clip_and_scale(s1, kRanges);
}

Raster normalize_s2(const Raster& s2) {
  static constexpr ClipRange kRanges[] = {
      {"B2", 0.0F, 3000.0F}, {"B3", 0.0F, 3000.0F}, {"B4", 0.0F, 3000.0F}, {"B8", 0.0F, 3000.0F}};
  return clip_and_scale(s2, kRanges);
}

Raster ndwi(const Raster& s2) {
  auto green = s2.band("B3");
  auto nir = s2.band("B8");
  Band out{"NDWI", std::vector<float>(green.size())};
  for (std::size_t i = 0; i < green.size(); ++i) {
    const float sum = green[i] + nir[i];
    out.data[i] = sum == 0.0F ? 0.0F : (green[i] - nir[i]) / sum;
  }
  return {s2.width(), s2.height(), s2.resolution_m(), {std::move(out)}};
}

namespace {

struct Tap {
  int i0;
  int i1;
  float t;
};

// Pixel-center alignment: output center x maps to (x + 0.5) * in / out - 0.5.
std::vector<Tap> bilinear_taps(int in_size, int out_size) {
  std::vector<Tap> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_size - 1);
    taps[o] = {i0, i1, static_cast<float>(src - i0)};
  }
  return taps;
}

}  // namespace

std::vector<float> resample_plane(std::span<const float> plane, int in_w, int in_h, int out_w,
                                  int out_h, ResampleMethod method) {
  if (out_w < 1 || out_h < 1) throw SchemaError("resample: output size must be positive");
  std::vector<float> out(static_cast<std::size_t>(out_w) * out_h);
  if (method == ResampleMethod::Nearest) {
    std::vector<int> cols(out_w);
    for (int c = 0; c < out_w; ++c) cols[c] = nearest_source_index(c, in_w, out_w);
    for (int r = 0; r < out_h; ++r) {
      const float* src = plane.data() + static_cast<std::size_t>(nearest_source_index(r, in_h, out_h)) * in_w;
      float* dst = out.data() + static_cast<std::size_t>(r) * out_w;
      for (int c = 0; c < out_w; ++c) dst[c] = src[cols[c]];
    }
    return out;
  }
  const auto xs = bilinear_taps(in_w, out_w);
  const auto ys = bilinear_taps(in_h, out_h);
  for (int r = 0; r < out_h; ++r) {
    const float* row0 = plane.data() + static_cast<std::size_t>(ys[r].i0) * in_w;
    const float* row1 = plane.data() + static_cast<std::size_t>(ys[r].i1) * in_w;
    const float ty = ys[r].t;
    float* dst = out.data() + static_cast<std::size_t>(r) * out_w;
    for (int c = 0; c < out_w; ++c) {
      const Tap& x = xs[c];
      // a + t * (b - a) keeps constant fields exact.
      const float top = row0[x.i0] + x.t * (row0[x.i1] - row0[x.i0]);
      const float bottom = row1[x.i0] + x.t * (row1[x.i1] - row1[x.i0]);
      dst[c] = top + ty * (bottom - top);
    }
  }
  return out;
}

Raster resample(const Raster& raster, int out_w, int out_h, ResampleMethod method) {
  if (out_w < 1 || out_h < 1) throw SchemaError("resample: output size must be positive");
  std::vector<Band> out;
  out.reserve(raster.band_count());
  for (const auto& b : raster.bands()) {
    out.push_back({b.name, resample_plane(b.data, raster.width(), raster.height(), out_w, out_h,
                                          method)});
  }
  const float res = raster.resolution_m() * static_cast<float>(raster.width()) / out_w;
  return {out_w, out_h, res, std::move(out)};
}

double cloud_fraction(const ClassMask& mask) {
  std::size_t valid = 0;
  std::size_t cloud = 0;
  for (Code c : mask.cells()) {
    if (c == Code::Invalid) continue;
    ++valid;
    if (c == Code::Cloud) ++cloud;
  }
  return valid == 0 ? 0.0 : static_cast<double>(cloud) / static_cast<double>(valid);
}

std::vector<Tile> tile(const Raster& raster, const ClassMask& mask, int size, double max_cloud) {
  if (size < 1) throw ConfigError("tile size must be >= 1");
  require_same_shape(mask, Grid<Code>(raster.width(), raster.height()), "tile");
  std::vector<Tile> tiles;
  const int rows = (raster.height() + size - 1) / size;
  const int cols = (raster.width() + size - 1) / size;
  for (int tr = 0; tr < rows; ++tr) {
    for (int tc = 0; tc < cols; ++tc) {
      const int r0 = tr * size;
      const int c0 = tc * size;
      const int h = std::min(size, raster.height() - r0);
      const int w = std::min(size, raster.width() - c0);
      ClassMask tm(size, size, Code::Invalid);
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) tm.at(r, c) = mask.at(r0 + r, c0 + c);
      }
      if (cloud_fraction(tm) > max_cloud) continue;
      std::vector<Band> bands;
      for (const auto& b : raster.bands()) {
        std::vector<float> data(static_cast<std::size_t>(size) * size, 0.0F);
        for (int r = 0; r < h; ++r) {
          const float* src = b.data.data() + static_cast<std::size_t>(r0 + r) * raster.width() + c0;
          std::copy(src, src + w, data.begin() + static_cast<std::ptrdiff_t>(r) * size);
        }
        bands.push_back({b.name, std::move(data)});
      }
      tiles.push_back({Raster(size, size, raster.resolution_m(), std::move(bands)), std::move(tm),
                       r0, c0});
    }
  }
  return tiles;
}

}  // namespace floodseg
