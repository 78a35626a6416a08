#include "floodseg/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace floodseg {

OccurrenceMap::OccurrenceMap(Raster raster) {
  if (raster.band_count() != 1) throw SchemaError("occurrence map must have exactly one band");
  std::vector<float> data(raster.band(0).begin(), raster.band(0).end());
  for (float& v : data) v = std::isfinite(v) ? std::clamp(v, 0.0F, 1.0F) : 0.0F;
  std::vector<Band> bands;
  bands.push_back({"occurrence", std::move(data)});
  raster_ = Raster(raster.width(), raster.height(), raster.resolution_m(), std::move(bands));
}

OccurrenceMap OccurrenceMap::resampled_to(int width, int height) const {
  if (raster_.width() == width && raster_.height() == height) return *this;
  return OccurrenceMap(resample(raster_, width, height, ResampleMethod::Nearest));
}

namespace {

// Sliding max/min of a binary row or column with a window of +-radius.
// `outside` is the value assumed beyond the grid edge.
BinaryGrid square_filter(const BinaryGrid& in, int radius, bool take_max, std::uint8_t outside) {
  const int w = in.width();
  const int h = in.height();
  BinaryGrid tmp(w, h);
  BinaryGrid out(w, h);
  auto pass = [&](const BinaryGrid& src, BinaryGrid& dst, bool horizontal) {
    const int len = horizontal ? w : h;
    const int lines = horizontal ? h : w;
    for (int line = 0; line < lines; ++line) {
      for (int i = 0; i < len; ++i) {
        std::uint8_t acc = take_max ? 0 : 1;
        for (int d = -radius; d <= radius; ++d) {
          const int j = i + d;
          std::uint8_t v;
          if (j < 0 || j >= len) {
            v = outside;
          } else {
            v = horizontal ? src.at(line, j) : src.at(j, line);
          }
          acc = take_max ? std::max(acc, v) : std::min(acc, v);
        }
        (horizontal ? dst.at(line, i) : dst.at(i, line)) = acc;
      }
    }
  };
  pass(in, tmp, true);
  pass(tmp, out, false);
  return out;
}

BinaryGrid normalized(const BinaryGrid& g) {
  BinaryGrid out = g;
  for (auto& v : out.cells()) v = v != 0 ? 1 : 0;
  return out;
}

}  // namespace

ClassMask dilate_cloud_mask(const ClassMask& mask, int radius) {
  if (radius < 0) throw ConfigError("cloud dilation radius must be >= 0");
  if (radius == 0) return mask;
  BinaryGrid cloud(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) cloud[i] = mask[i] == Code::Cloud ? 1 : 0;
  const BinaryGrid grown = square_filter(cloud, radius, true, 0);
  ClassMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (grown[i] != 0) out[i] = Code::Cloud;
  }
  return out;
}

ClassMask weak_label_from_ndwi(const Raster& ndwi_raster, const ClassMask& cloud) {
  if (ndwi_raster.band_count() != 1) throw SchemaError("weak label expects a single NDWI band");
  if (!cloud.same_shape(ndwi_raster.width(), ndwi_raster.height())) {
    throw SchemaError("weak label: NDWI and cloud mask shapes differ");
  }
  auto index = ndwi_raster.band(0);
  ClassMask out(cloud.width(), cloud.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (is_ignored(cloud[i])) {
      out[i] = cloud[i];
    } else {
      out[i] = index[i] > 0.0F ? Code::Water : Code::Dry;
    }
  }
  return out;
}

ClassMask improve_weak_label(const ClassMask& weak, const OccurrenceMap& occ, double threshold) {
  if (!weak.same_shape(occ.width(), occ.height())) {
    throw SchemaError("improve_weak_label: occurrence map and label shapes differ");
  }
  ClassMask out = weak;
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) {
      if (out.at(r, c) == Code::Dry && occ.at(r, c) > threshold) out.at(r, c) = Code::Water;
    }
  }
  return out;
}

OtsuHistogram build_histogram(std::span<const float> values, int n_bins) {
  if (n_bins < 2) throw ConfigError("otsu needs at least 2 bins");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (float v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  if (!(hi > lo)) throw DegenerateInputError("otsu: band needs at least two distinct finite values");
  OtsuHistogram h{std::vector<std::int64_t>(n_bins, 0), lo, hi};
  const double scale = n_bins / (hi - lo);
  for (float v : values) {
    if (!std::isfinite(v)) continue;
    const int b = std::min(static_cast<int>((v - lo) * scale), n_bins - 1);
    ++h.counts[b];
  }
  return h;
}

int otsu_split(std::span<const std::int64_t> counts) {
  // In bin-index units the between-class variance times N^2 is
  // (s0 * N - S * n0)^2 / (n0 * n1), built from exact integer sums.
  std::int64_t total = 0;
  std::int64_t total_sum = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    total += counts[i];
    total_sum += static_cast<std::int64_t>(i) * counts[i];
  }
  int best_k = -1;
  double best = -1.0;
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  for (std::size_t k = 1; k < counts.size(); ++k) {
    n0 += counts[k - 1];
    s0 += static_cast<std::int64_t>(k - 1) * counts[k - 1];
    const std::int64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const auto d = static_cast<double>(static_cast<__int128>(s0) * total -
                                       static_cast<__int128>(total_sum) * n0);
    const double between = d * d / (static_cast<double>(n0) * static_cast<double>(n1));
    if (between > best) {
      best = between;
      best_k = static_cast<int>(k);
    }
  }
  if (best_k < 0) throw DegenerateInputError("otsu: histogram has a single populated bin");
  return best_k;
}

double otsu_threshold(std::span<const float> values, int n_bins) {
  const OtsuHistogram h = build_histogram(values, n_bins);
  const int k = otsu_split(h.counts);
  return h.lo + k * (h.hi - h.lo) / n_bins;
}

double otsu_threshold(const Raster& band, int n_bins) {
  if (band.band_count() != 1) throw SchemaError("otsu_threshold expects a single-band raster");
  return otsu_threshold(band.band(0), n_bins);
}

ClassMask otsu_segment(const Raster& s1, const std::string& band_name) {
  auto values = s1.band(band_name);
  const double t = otsu_threshold(values);
  ClassMask out(s1.width(), s1.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = values[i] < t ? Code::Water : Code::Dry;
  }
  return out;
}

BinaryGrid erode(const BinaryGrid& mask, int iterations) {
  if (iterations < 0) throw ConfigError("erode: iterations must be >= 0");
  BinaryGrid out = normalized(mask);
  for (int i = 0; i < iterations; ++i) out = square_filter(out, 1, false, 0);
  return out;
}

BinaryGrid dilate(const BinaryGrid& mask, int iterations) {
  if (iterations < 0) throw ConfigError("dilate: iterations must be >= 0");
  BinaryGrid out = normalized(mask);
  for (int i = 0; i < iterations; ++i) out = square_filter(out, 1, true, 0);
  return out;
}

BinaryGrid water_of(const ClassMask& label) {
  BinaryGrid water(label.width(), label.height());
  for (std::size_t i = 0; i < label.size(); ++i) water[i] = label[i] == Code::Water ? 1 : 0;
  return water;
}

EdgeMaps edge_maps(const ClassMask& label, int iterations) {
  const BinaryGrid water = water_of(label);
  const BinaryGrid eroded = erode(water, iterations);
  const BinaryGrid dilated = dilate(water, iterations);
  EdgeMaps maps{BinaryGrid(label.width(), label.height()), BinaryGrid(label.width(), label.height())};
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (is_ignored(label[i])) continue;
    maps.inner[i] = (water[i] != 0 && eroded[i] == 0) ? 1 : 0;
    maps.outer[i] = (dilated[i] != 0 && water[i] == 0) ? 1 : 0;
  }
  return maps;
}

WeightMap weight_map(const ClassMask& label, float w_inner, float w_outer, int iterations) {
  if (!(w_inner >= 0.0F) || !(w_outer >= 0.0F)) throw ConfigError("edge weights must be >= 0");
  const EdgeMaps edges = edge_maps(label, iterations);
  WeightMap w(label.width(), label.height(), 1.0F);
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (is_ignored(label[i])) {
      w[i] = 0.0F;
    } else if (edges.inner[i] != 0) {
      w[i] = w_inner;
    } else if (edges.outer[i] != 0) {
      w[i] = w_outer;
    }
  }
  return w;
}

}  // namespace floodseg
