#pragma once

// Brute-force reference implementations. Each one follows the textbook
// definition directly and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "floodseg/grid.hpp"

namespace oracle {

using floodseg::BinaryGrid;
using floodseg::ClassMask;
using floodseg::Code;

inline bool ignored(Code c) { return c == Code::Cloud || c == Code::Invalid; }

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts confusion(const ClassMask& pred, const ClassMask& truth) {
  Counts c;
  for (int r = 0; r < truth.height(); ++r) {
    for (int col = 0; col < truth.width(); ++col) {
      const Code t = truth.at(r, col);
      if (ignored(t)) continue;
      const bool pw = pred.at(r, col) == Code::Water;
      const bool tw = t == Code::Water;
      if (pw && tw) c.tp++;
      if (pw && !tw) c.fp++;
      if (!pw && tw) c.fn++;
      if (!pw && !tw) c.tn++;
    }
  }
  return c;
}

// IoU of all images stitched side by side into one long strip.
inline double pooled_iou(const std::vector<ClassMask>& preds, const std::vector<ClassMask>& truths) {
  std::int64_t inter = 0, uni = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    for (std::size_t i = 0; i < truths[k].size(); ++i) {
      if (ignored(truths[k][i])) continue;
      const bool a = preds[k][i] == Code::Water;
      const bool b = truths[k][i] == Code::Water;
      inter += a && b;
      uni += a || b;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// One pass of a 3x3 square structuring element; outside cells are 0.
inline BinaryGrid morph_once(const BinaryGrid& m, bool dilate) {
  BinaryGrid out(m.width(), m.height());
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      bool any = false, all = true;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          const bool inside = rr >= 0 && rr < m.height() && cc >= 0 && cc < m.width();
          const bool v = inside && m.at(rr, cc) != 0;
          any = any || v;
          all = all && v;
        }
      }
      out.at(r, c) = (dilate ? any : all) ? 1 : 0;
    }
  }
  return out;
}

inline BinaryGrid erode(BinaryGrid m, int iterations) {
  for (int i = 0; i < iterations; ++i) m = morph_once(m, false);
  if (iterations == 0) {
    for (auto& v : m.cells()) v = v != 0;
  }
  return m;
}

inline BinaryGrid dilate(BinaryGrid m, int iterations) {
  for (int i = 0; i < iterations; ++i) m = morph_once(m, true);
  if (iterations == 0) {
    for (auto& v : m.cells()) v = v != 0;
  }
  return m;
}

struct Edges {
  BinaryGrid inner, outer;
};

inline Edges edge_maps(const ClassMask& label, int iterations = 1) {
  BinaryGrid water(label.width(), label.height());
  for (std::size_t i = 0; i < label.size(); ++i) water[i] = label[i] == Code::Water;
  const BinaryGrid er = oracle::erode(water, iterations);
  const BinaryGrid di = oracle::dilate(water, iterations);
  Edges e{BinaryGrid(label.width(), label.height()), BinaryGrid(label.width(), label.height())};
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (ignored(label[i])) continue;
    e.inner[i] = water[i] && !er[i];
    e.outer[i] = di[i] && !water[i];
  }
  return e;
}

// Every pixel within Chebyshev distance radius of a CLOUD pixel, by scanning
// the full neighbourhood.
inline ClassMask dilate_cloud(const ClassMask& m, int radius) {
  ClassMask out = m;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      for (int rr = std::max(0, r - radius); rr <= std::min(m.height() - 1, r + radius); ++rr) {
        for (int cc = std::max(0, c - radius); cc <= std::min(m.width() - 1, c + radius); ++cc) {
          if (m.at(rr, cc) == Code::Cloud) out.at(r, c) = Code::Cloud;
        }
      }
    }
  }
  return out;
}

// Otsu by exhaustive search over every bin boundary. Histogram: n_bins equal
// bins over [min, max], the maximum landing in the last bin. Between-class
// variance w0 w1 (mu0 - mu1)^2 is compared exactly as a rational number.
inline double otsu_threshold(const std::vector<float>& values, int n_bins) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (float v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min<double>(lo, v);
    hi = std::max<double>(hi, v);
  }
  std::vector<std::int64_t> h(n_bins, 0);
  for (float v : values) {
    if (!std::isfinite(v)) continue;
    int b = static_cast<int>((v - lo) * (n_bins / (hi - lo)));
    if (b >= n_bins) b = n_bins - 1;
    h[b]++;
  }
  // With N0, N1 counts and S0, S1 sums of bin indices:
  // sigma_b * N^2 = (S0 N1 - S1 N0)^2 / (N0 N1).
  using i128 = __int128;
  int best = -1;
  i128 best_num = -1, best_den = 1;
  for (int k = 1; k < n_bins; ++k) {
    i128 n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b = 0; b < n_bins; ++b) {
      if (b < k) {
        n0 += h[b];
        s0 += static_cast<i128>(b) * h[b];
      } else {
        n1 += h[b];
        s1 += static_cast<i128>(b) * h[b];
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const i128 d = s0 * n1 - s1 * n0;
    const i128 num = d * d;
    const i128 den = n0 * n1;
    if (best < 0 || num * best_den > best_num * den) {
      best = k;
      best_num = num;
      best_den = den;
    }
  }
  return lo + best * (hi - lo) / n_bins;
}

// Expected calibration error of the predicted class, one pixel at a time.
inline double ece(const std::vector<float>& water_probs, const ClassMask& truth, int n_bins) {
  std::vector<double> n(n_bins), acc(n_bins), conf(n_bins);
  double total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (ignored(truth[i])) continue;
    const double p = water_probs[i];
    const bool says_water = p > 0.5;
    const double c = says_water ? p : 1 - p;
    int b = static_cast<int>(std::floor(c * n_bins));
    if (b == n_bins) b = n_bins - 1;
    n[b] += 1;
    conf[b] += c;
    acc[b] += says_water == (truth[i] == Code::Water) ? 1 : 0;
    total += 1;
  }
  double e = 0;
  for (int b = 0; b < n_bins; ++b) {
    if (n[b] == 0) continue;
    e += n[b] / total * std::fabs(acc[b] / n[b] - conf[b] / n[b]);
  }
  return e;
}

// Zero-padded cross-correlation in double precision, one output at a time.
inline std::vector<double> conv2d(const std::vector<float>& in, int in_c, int h, int w,
                                  const std::vector<float>& weight, const std::vector<float>& bias, int out_c,
                                  int k, int stride, int pad) {
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(out_c) * oh * ow);
  for (int o = 0; o < out_c; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (int i = 0; i < in_c; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = y * stride - pad + ky, xx = x * stride - pad + kx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += static_cast<double>(weight[((o * in_c + i) * k + ky) * k + kx]) * in[(i * h + yy) * w + xx];
            }
          }
        }
        out[(o * oh + y) * ow + x] = s;
      }
    }
  }
  return out;
}

// Bilinear sample of a plane at pixel-centre aligned output coordinates.
inline std::vector<double> bilinear(const std::vector<float>& plane, int h, int w, int oh, int ow) {
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return static_cast<double>(plane[y * w + x]);
  };
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double sy = std::max(0.0, (y + 0.5) * h / oh - 0.5);
      const double sx = std::max(0.0, (x + 0.5) * w / ow - 0.5);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const double fy = sy - y0, fx = sx - x0;
      out[y * ow + x] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                        fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
    }
  }
  return out;
}

}  // namespace oracle
