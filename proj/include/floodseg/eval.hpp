#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "floodseg/grid.hpp"
#include "floodseg/model.hpp"
#include "floodseg/raster.hpp"

namespace floodseg {

// Water is the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t scored() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Pixels whose truth is CLOUD or INVALID are not scored. A prediction counts
// as positive only when it is WATER.
ConfusionCounts confusion(const ClassMask& pred, const ClassMask& truth);

// sum TP / sum (TP + FP + FN) across images (micro average).
double pooled_iou(std::span<const ConfusionCounts> counts);

// Probability of water above 0.5 maps to WATER.
ClassMask probs_to_mask(const Tensor& probs);
Grid<float> water_probability(const Tensor& probs);

// Expected calibration error of the predicted class over equal-width
// confidence bins on [0, 1].
double ece(const Grid<float>& water_probs, const ClassMask& truth, int n_bins = 10);

struct Inference10m {
  Tensor probs;        // 2 x H x W on the input grid, rows sum to 1
  int internal_width;  // grid the network actually saw
  int internal_height;
};

// Downsample to 16 m, normalize, run the net, softmax and upsample the
// probabilities back to the input grid with per-pixel renormalization.
Inference10m infer_10m(const SegNet& net, const Raster& s1_10m, float model_resolution_m = 16.0F);

// Colormap: DRY green (0,128,0), WATER blue, CLOUD white, INVALID black.
using Rgb = std::array<std::uint8_t, 3>;
Rgb class_color(Code c);
void render_png(const ClassMask& mask, const std::filesystem::path& path);
// Blue-intensity ramp from black (0) to blue (1).
void render_png(const Grid<float>& probs, const std::filesystem::path& path);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;
};
RgbImage read_png(const std::filesystem::path& path);

}  // namespace floodseg
