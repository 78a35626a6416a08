#pragma once

#include <span>
#include <string>

#include "floodseg/grid.hpp"
#include "floodseg/raster.hpp"

namespace floodseg {

// Long-term surface water occurrence, a single "occurrence" band clamped to [0, 1].
class OccurrenceMap {
 public:
  OccurrenceMap() = default;
  explicit OccurrenceMap(Raster raster);

  const Raster& raster() const noexcept { return raster_; }
  int width() const noexcept { return raster_.width(); }
  int height() const noexcept { return raster_.height(); }
  float at(int row, int col) const { return raster_.at(0, row, col); }

  // Nearest-neighbour resampling onto a label grid.
  OccurrenceMap resampled_to(int width, int height) const;

 private:
  Raster raster_;
};

struct EdgeMaps {
  BinaryGrid inner;
  BinaryGrid outer;
};

ClassMask dilate_cloud_mask(const ClassMask& mask, int radius = 3);

// NDWI > 0 marks water, everything else dry; CLOUD/INVALID in `cloud` win.
ClassMask weak_label_from_ndwi(const Raster& ndwi, const ClassMask& cloud);

// Marks DRY pixels with occurrence above `threshold` as WATER.
ClassMask improve_weak_label(const ClassMask& weak, const OccurrenceMap& occ, double threshold = 0.5);

// Otsu split over an equal-width histogram spanning [min, max] of the finite values.
struct OtsuHistogram {
  std::vector<std::int64_t> counts;
  double lo = 0.0;
  double hi = 0.0;
};
OtsuHistogram build_histogram(std::span<const float> values, int n_bins);
// Boundary index k in [1, n_bins - 1] splitting bins [0, k) from [k, n_bins);
// the lowest k wins ties.
int otsu_split(std::span<const std::int64_t> counts);
double otsu_threshold(std::span<const float> values, int n_bins = 256);
double otsu_threshold(const Raster& band, int n_bins = 256);
// Pixels strictly below the threshold become WATER.
ClassMask otsu_segment(const Raster& s1, const std::string& band_name = "VV");

// 3x3 square structuring element; cells outside the grid count as background.
BinaryGrid erode(const BinaryGrid& mask, int iterations = 1);
BinaryGrid dilate(const BinaryGrid& mask, int iterations = 1);

BinaryGrid water_of(const ClassMask& label);

EdgeMaps edge_maps(const ClassMask& label, int iterations = 1);

WeightMap weight_map(const ClassMask& label, float w_inner = 10.0F, float w_outer = 5.0F,
                     int iterations = 1);

}  // namespace floodseg
