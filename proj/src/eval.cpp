#include "floodseg/eval.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

namespace floodseg {

ConfusionCounts confusion(const ClassMask& pred, const ClassMask& truth) {
  require_same_shape(pred, truth, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (is_ignored(truth[i])) continue;
    const bool p = pred[i] == Code::Water;
    const bool t = truth[i] == Code::Water;
    if (p && t) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

double pooled_iou(std::span<const ConfusionCounts> counts) {
  ConfusionCounts total;
  for (const auto& c : counts) total += c;
  const std::int64_t denom = total.tp + total.fp + total.fn;
  if (denom == 0) throw DegenerateInputError("pooled_iou: no water in predictions or truth");
  return static_cast<double>(total.tp) / static_cast<double>(denom);
}

ClassMask probs_to_mask(const Tensor& probs) {
  if (probs.channels != 2) throw SchemaError("probs_to_mask expects 2 channels");
  ClassMask m(probs.width, probs.height);
  const std::size_t n = probs.plane_size();
  for (std::size_t i = 0; i < n; ++i) m[i] = probs.data[n + i] > 0.5F ? Code::Water : Code::Dry;
  return m;
}

Grid<float> water_probability(const Tensor& probs) {
  if (probs.channels != 2) throw SchemaError("water_probability expects 2 channels");
  auto plane = probs.plane(1);
  return {probs.width, probs.height, std::vector<float>(plane.begin(), plane.end())};
}

double ece(const Grid<float>& water_probs, const ClassMask& truth, int n_bins) {
  require_same_shape(water_probs, truth, "ece");
  if (n_bins < 1) throw ConfigError("ece: n_bins must be >= 1");
  std::vector<std::int64_t> count(n_bins, 0);
  std::vector<std::int64_t> correct(n_bins, 0);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (is_ignored(truth[i])) continue;
    const double p = water_probs[i];
    const bool pred_water = p > 0.5;
    const double conf = pred_water ? p : 1.0 - p;
    const int b = std::clamp(static_cast<int>(conf * n_bins), 0, n_bins - 1);
    ++count[b];
    conf_sum[b] += conf;
    if (pred_water == (truth[i] == Code::Water)) ++correct[b];
    ++total;
  }
  if (total == 0) throw DegenerateInputError("ece: no scored pixels");
  double e = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    const double acc = static_cast<double>(correct[b]) / count[b];
    const double conf = conf_sum[b] / count[b];
    e += static_cast<double>(count[b]) / total * std::abs(acc - conf);
  }
  return e;
}

Inference10m infer_10m(const SegNet& net, const Raster& s1_10m, float model_resolution_m) {
  const double ratio = s1_10m.resolution_m() / model_resolution_m;
  const int iw = static_cast<int>(std::lround(s1_10m.width() * ratio));
  const int ih = static_cast<int>(std::lround(s1_10m.height() * ratio));
  if (iw < 16 || ih < 16 || iw % 16 != 0 || ih % 16 != 0) {
    throw SchemaError("infer_10m: downsampled grid " + std::to_string(iw) + "x" + std::to_string(ih) +
                      " is not a multiple of 16");
  }
  const Raster coarse = normalize_s1(resample(s1_10m, iw, ih, ResampleMethod::Bilinear));
  Tensor x(2, ih, iw);
  for (int c = 0; c < 2; ++c) {
    auto src = coarse.band(static_cast<std::size_t>(c));
    std::copy(src.begin(), src.end(), x.plane(c).begin());
  }
  const Tensor probs = softmax_probs(forward(net, x).logits);
  Tensor up = upsample_bilinear(probs, s1_10m.height(), s1_10m.width());
  const std::size_t n = up.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const float s = up.data[i] + up.data[n + i];
    const float water = s > 0.0F ? std::clamp(up.data[n + i] / s, 0.0F, 1.0F) : 0.5F;
    up.data[n + i] = water;
    up.data[i] = 1.0F - water;
  }
  return {std::move(up), iw, ih};
}

Rgb class_color(Code c) {
  switch (c) {
    case Code::Dry: return {0, 128, 0};
    case Code::Water: return {0, 0, 255};
    case Code::Cloud: return {255, 255, 255};
    case Code::Invalid: break;
  }
  return {0, 0, 0};
}

namespace {

void write_rgb(int width, int height, const std::vector<std::uint8_t>& rgb, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG '" + path.string() + "': " + msg);
  }
}

}  // namespace

void render_png(const ClassMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> rgb;
  rgb.reserve(mask.size() * 3);
  for (Code c : mask.cells()) {
    const Rgb px = class_color(c);
    rgb.insert(rgb.end(), px.begin(), px.end());
  }
  write_rgb(mask.width(), mask.height(), rgb, path);
}

void render_png(const Grid<float>& probs, const std::filesystem::path& path) {
  std::vector<std::uint8_t> rgb;
  rgb.reserve(probs.size() * 3);
  for (float p : probs.cells()) {
    const float v = std::isfinite(p) ? std::clamp(p, 0.0F, 1.0F) : 0.0F;
    rgb.insert(rgb.end(), {0, 0, static_cast<std::uint8_t>(std::lround(v * 255.0F))});
  }
  write_rgb(probs.width(), probs.height(), rgb, path);
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  RgbImage out{static_cast<int>(image.width), static_cast<int>(image.height), {}};
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = {buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
  }
  return out;
}

}  // namespace floodseg
