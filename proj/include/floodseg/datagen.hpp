#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "floodseg/grid.hpp"
#include "floodseg/labeling.hpp"
#include "floodseg/raster.hpp"
#include "floodseg/rng.hpp"
#include "floodseg/tensor.hpp"

namespace floodseg {

// ---- synthetic scenes ----

struct SceneParams {
  double water_fraction = 0.2;  // target share of water pixels; 0 disables water
  double river_width = 0.05;    // mean river width as a fraction of the scene size
  int max_flood_lobes = 4;
  double shallow_fraction = 0.5;  // share of lobes that are shallow turbid water: brighter SAR, NDWI < 0
  double cloud_cover = 0.15;    // target share of clouded pixels
  int cloud_shadow_shift = 2;   // shadow offset in pixels, dark in S2 only
  int dark_patches = 2;         // SAR look-alikes: low backscatter dry land
  double speckle_looks = 4.0;   // gamma-distributed multiplicative speckle
  bool noise_free = false;      // disables speckle and optical noise
  float resolution_m = 16.0F;

  void validate() const;
};

struct SceneBundle {
  Raster s1;  // VV, VH in dB
  Raster s2;  // B2, B3, B4, B8 reflectance in [0, 3000+]
  ClassMask truth;      // DRY/WATER only
  OccurrenceMap occurrence;
  ClassMask cloud;      // CLOUD where occluded, DRY elsewhere
  BinaryGrid permanent; // river pixels (permanent water)
  std::uint64_t seed = 0;
};

// Meandering river plus flood lobes over textured terrain; deterministic in seed.
SceneBundle generate_scene(std::uint64_t seed, int size, const SceneParams& params = {});

enum class CorruptMode { RiverDropout, Overflood, SpeckleNoise };
CorruptMode parse_corrupt_mode(const std::string& name);

// river_dropout removes a 4-connected region of round(severity * water) pixels;
// overflood dilates water round(10 * severity) times; speckle_noise flips
// DRY/WATER pixels with probability severity. CLOUD/INVALID are never touched.
ClassMask corrupt_weak_label(const ClassMask& label, CorruptMode mode, double severity, std::uint64_t seed);

// ---- manifests ----

using Timestamp = std::chrono::sys_seconds;
Timestamp parse_timestamp(const std::string& iso8601_utc);
std::string format_timestamp(Timestamp t);

enum class Source { HandLabel, WeakSen1Floods11, WeakFloods208 };
Source parse_source(const std::string& name);
std::string source_name(Source s);

struct SampleRecord {
  std::string scene_id;
  Source source = Source::HandLabel;
  std::filesystem::path s1_path;
  std::filesystem::path s2_path;
  std::filesystem::path label_path;
  std::filesystem::path occurrence_path;
  Timestamp timestamp{};
  double cloud_fraction = 0.0;
};

// Cloud masks live next to the S2 raster as <stem>.cloud.fsm.
std::filesystem::path cloud_mask_path(const std::filesystem::path& s2_path);

struct Manifest {
  std::vector<SampleRecord> rows;
};

inline constexpr const char* kManifestHeader =
    "scene_id,source,s1_path,s2_path,label_path,occurrence_path,timestamp,cloud_fraction";

// Relative paths are resolved against the manifest's directory; empty label or
// occurrence paths are allowed and skipped by the existence check.
Manifest read_manifest(const std::filesystem::path& path, bool check_files = true);
// Paths are written relative to the manifest's directory when possible.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// ---- pairing ----

struct PairCandidate {
  Timestamp timestamp;
  double cloud_fraction;
};

// Index of the candidate within 12 h and at most 12% cloud that is closest in
// time (earlier timestamp, then lower index, on ties); nullopt discards the point.
std::optional<std::size_t> pair_filter(Timestamp s1_time, std::span<const PairCandidate> candidates,
                                       std::chrono::seconds max_gap = std::chrono::hours(12),
                                       double max_cloud = 0.12);

// ---- balanced batching ----

// Each batch holds batch/2 items from each source. Each source cycles through
// its own seeded permutation, reshuffled whenever it is exhausted.
class BalancedSampler {
 public:
  BalancedSampler(std::size_t size_a, std::size_t size_b, int batch, std::uint64_t seed);

  struct Batch {
    std::vector<std::size_t> a;
    std::vector<std::size_t> b;
  };
  Batch next();
  // Batches needed to visit every item of the larger source once.
  std::size_t batches_per_epoch() const noexcept;

 private:
  struct Cursor {
    std::size_t size = 0;
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    std::uint64_t epoch = 0;
    std::uint64_t seed = 0;
    std::size_t draw();
  };
  Cursor a_;
  Cursor b_;
  int half_;
};

template <typename T>
class BalancedBatches {
 public:
  BalancedBatches(std::vector<T> a, std::vector<T> b, int batch, std::uint64_t seed)
      : a_(std::move(a)), b_(std::move(b)), sampler_(a_.size(), b_.size(), batch, seed) {}

  // First half from source a, second half from source b.
  std::vector<T> next() {
    const auto idx = sampler_.next();
    std::vector<T> out;
    out.reserve(idx.a.size() + idx.b.size());
    for (auto i : idx.a) out.push_back(a_[i]);
    for (auto i : idx.b) out.push_back(b_[i]);
    return out;
  }
  std::size_t batches_per_epoch() const noexcept { return sampler_.batches_per_epoch(); }

 private:
  std::vector<T> a_;
  std::vector<T> b_;
  BalancedSampler sampler_;
};

// ---- augmentation ----

struct AugmentConfig {
  bool flip_h = true;  // random horizontal flip with probability 1/2
  bool flip_v = true;
  double crop_min = 0.7;  // per-axis crop scale range (aspect distortion)
  double crop_max = 1.0;
  double jitter_sigma = 0.02;  // per-band additive offset

  void validate() const;
  static AugmentConfig none() { return {false, false, 1.0, 1.0, 0.0}; }
};

// One draw of the random geometry and photometric offsets.
struct AugmentPlan {
  bool flip_h = false;
  bool flip_v = false;
  double crop_x0 = 0.0;
  double crop_y0 = 0.0;
  double crop_w = 0.0;
  double crop_h = 0.0;
  int width = 0;
  int height = 0;
  double jitter_sigma = 0.0;
  std::uint64_t jitter_seed = 0;

  bool is_identity_geometry() const noexcept;
};

AugmentPlan sample_augment_plan(const AugmentConfig& config, std::uint64_t seed, int width, int height);

// Crop-resize-flip of every channel (bilinear) or cell (nearest).
Tensor apply_geometry(const Tensor& x, const AugmentPlan& plan);
template <typename T>
Grid<T> apply_geometry(const Grid<T>& g, const AugmentPlan& plan);
// Adds one N(0, sigma) offset per channel, then clamps to [0, 1].
void apply_jitter(Tensor& x, const AugmentPlan& plan);

struct AugmentedView {
  std::vector<Raster> rasters;
  ClassMask mask;
};
// Same geometry for all rasters and the mask; jitter on raster bands only.
AugmentedView augment(const std::vector<Raster>& rasters, const ClassMask& mask, const AugmentConfig& config,
                      std::uint64_t seed);

// ---- template implementation ----

namespace detail {
int geometry_source_nearest(const AugmentPlan& plan, int out, bool horizontal);
}

template <typename T>
Grid<T> apply_geometry(const Grid<T>& g, const AugmentPlan& plan) {
  Grid<T> out(g.width(), g.height());
  for (int r = 0; r < g.height(); ++r) {
    const int sr = detail::geometry_source_nearest(plan, r, false);
    for (int c = 0; c < g.width(); ++c) {
      out.at(r, c) = g.at(sr, detail::geometry_source_nearest(plan, c, true));
    }
  }
  return out;
}

}  // namespace floodseg
