#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "floodseg/grid.hpp"

namespace floodseg {

struct Band {
  std::string name;
  std::vector<float> data;  // height * width, row-major

  friend bool operator==(const Band&, const Band&) = default;
};

// Named multi-band float raster with a ground sampling distance.
// Immutable after construction; operations return new rasters.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, float resolution_m, std::vector<Band> bands);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  float resolution_m() const noexcept { return resolution_m_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  const std::vector<Band>& bands() const noexcept { return bands_; }
  std::size_t band_count() const noexcept { return bands_.size(); }
  bool has_band(std::string_view name) const noexcept;
  // Throws SchemaError when the band is missing.
  std::span<const float> band(std::string_view name) const;
  std::span<const float> band(std::size_t index) const { return bands_.at(index).data; }
  float at(std::size_t band_index, int row, int col) const {
    return bands_[band_index].data[static_cast<std::size_t>(row) * width_ + col];
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  float resolution_m_ = 0.0F;
  std::vector<Band> bands_;
};

// Keeps only the named bands, in the given order.
Raster select_bands(const Raster& raster, std::span<const std::string> names);

// FSR raster container and FSM class-mask container; see README for layout.
void write_raster(const Raster& raster, const std::filesystem::path& path);
Raster read_raster(const std::filesystem::path& path);
void write_mask(const ClassMask& mask, const std::filesystem::path& path);
ClassMask read_mask(const std::filesystem::path& path);

std::vector<unsigned char> encode_raster(const Raster& raster);
Raster decode_raster(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_mask(const ClassMask& mask);
ClassMask decode_mask(std::span<const unsigned char> bytes);

// SAR backscatter in dB: VV clipped to [-20, 0], VH to [-30, 0], scaled to [0, 1].
Raster normalize_s1(const Raster& s1);
// Optical reflectance B2, B3, B4, B8 clipped to [0, 3000] and scaled to [0, 1].
Raster normalize_s2(const Raster& s2);

// (B3 - B8) / (B3 + B8) as a single band "NDWI"; 0 where the denominator is 0.
Raster ndwi(const Raster& s2);

enum class ResampleMethod { Bilinear, Nearest };

// Pixel-center aligned resampling. The output resolution scales with the
// width ratio.
Raster resample(const Raster& raster, int out_w, int out_h, ResampleMethod method);
std::vector<float> resample_plane(std::span<const float> plane, int in_w, int in_h, int out_w,
                                  int out_h, ResampleMethod method);

template <typename T>
Grid<T> resample_nearest(const Grid<T>& grid, int out_w, int out_h);

struct Tile {
  Raster raster;
  ClassMask mask;
  int row = 0;  // origin in the source raster
  int col = 0;
};

// Non-overlapping tiling anchored at (0, 0). Edge tiles are padded with 0 in
// the bands and INVALID in the mask; tiles whose cloud fraction exceeds
// max_cloud are dropped.
std::vector<Tile> tile(const Raster& raster, const ClassMask& mask, int size = 320,
                       double max_cloud = 0.8);

// |CLOUD| / |non-INVALID|, 0 when nothing is valid.
double cloud_fraction(const ClassMask& mask);

// ---- implementation of templates ----

inline int nearest_source_index(int out_index, int in_size, int out_size) {
  const double src = (static_cast<double>(out_index) + 0.5) * in_size / out_size;
  int i = static_cast<int>(src);
  return i < 0 ? 0 : (i >= in_size ? in_size - 1 : i);
}

template <typename T>
Grid<T> resample_nearest(const Grid<T>& grid, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw SchemaError("resample: output size must be positive");
  Grid<T> out(out_w, out_h);
  for (int r = 0; r < out_h; ++r) {
    const int sr = nearest_source_index(r, grid.height(), out_h);
    for (int c = 0; c < out_w; ++c) {
      out.at(r, c) = grid.at(sr, nearest_source_index(c, grid.width(), out_w));
    }
  }
  return out;
}

}  // namespace floodseg
