#include "floodseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "floodseg/labeling.hpp"
#include "floodseg/losses.hpp"
#include "floodseg/rng.hpp"

namespace floodseg {

namespace {

struct DTensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  DTensor() = default;
  DTensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
  double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

DTensor conv(const DTensor& in, const std::vector<double>& weight, const std::vector<double>& bias, int k,
             int stride) {
  const int out_c = static_cast<int>(bias.size());
  const int pad = k / 2;
  const int oh = (in.h + 2 * pad - k) / stride + 1;
  const int ow = (in.w + 2 * pad - k) / stride + 1;
  DTensor out(out_c, oh, ow);
  for (int o = 0; o < out_c; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = bias[o];
        for (int i = 0; i < in.c; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * stride + ky - pad;
              const int ix = x * stride + kx - pad;
              if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
              acc += weight[((static_cast<std::size_t>(o) * in.c + i) * k + ky) * k + kx] * in.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

void relu(DTensor& t, std::vector<bool>& pattern) {
  for (double& x : t.v) {
    x = std::max(x, 0.0);
    pattern.push_back(x > 0.0);
  }
}

double source_coord(int o, int in_size, int out_size) {
  const double s = (o + 0.5) * in_size / out_size - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(in_size - 1));
}

DTensor resize(const DTensor& in, int oh, int ow) {
  DTensor out(in.c, oh, ow);
  for (int ch = 0; ch < in.c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      const double sy = source_coord(y, in.h, oh);
      const int y0 = static_cast<int>(sy);
      const int y1 = std::min(y0 + 1, in.h - 1);
      const double ty = sy - y0;
      for (int x = 0; x < ow; ++x) {
        const double sx = source_coord(x, in.w, ow);
        const int x0 = static_cast<int>(sx);
        const int x1 = std::min(x0 + 1, in.w - 1);
        const double tx = sx - x0;
        out.at(ch, y, x) = (1 - ty) * ((1 - tx) * in.at(ch, y0, x0) + tx * in.at(ch, y0, x1)) +
                           ty * ((1 - tx) * in.at(ch, y1, x0) + tx * in.at(ch, y1, x1));
      }
    }
  }
  return out;
}

DTensor stack(const DTensor& a, const DTensor& b) {
  DTensor out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

std::vector<std::vector<double>> to_double(const SegNet& net) {
  std::vector<std::vector<double>> out;
  for (const auto& p : net.params()) out.emplace_back(p.data.begin(), p.data.end());
  return out;
}

Tensor random_tensor(Rng& rng, int c, int h, int w, double lo, double hi) {
  Tensor t(c, h, w);
  for (float& v : t.data) v = static_cast<float>(uniform(rng, lo, hi));
  return t;
}

ClassMask random_label(Rng& rng, int size, double ignore_rate) {
  ClassMask m(size, size);
  for (auto& c : m.cells()) {
    const double u = uniform01(rng);
    c = u < ignore_rate ? Code::Cloud : (u < ignore_rate + (1 - ignore_rate) / 2 ? Code::Water : Code::Dry);
  }
  return m;
}

// Central differences on each logit of a loss computed in double from float inputs.
template <typename LossFn>
void check_logit_gradient(GradcheckSuite& suite, Tensor logits, const LossFn& loss, double eps) {
  const Tensor analytic = loss(logits).grad_logits;
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    const float orig = logits.data[i];
    const float up = static_cast<float>(orig + eps);
    const float down = static_cast<float>(orig - eps);
    logits.data[i] = up;
    const double fp = loss(logits).value;
    logits.data[i] = down;
    const double fm = loss(logits).value;
    logits.data[i] = orig;
    const double numeric = (fp - fm) / (static_cast<double>(up) - static_cast<double>(down));
    suite.max_rel_error = std::max(suite.max_rel_error, relative_error(analytic.data[i], numeric));
    ++suite.checked;
  }
}

// Entries far below the tensor's gradient scale lose relative accuracy to
// float accumulation order; they are judged against 1% of that scale.
constexpr double kScaleFloor = 1e-2;

}  // namespace

ReferenceForward reference_forward(const SegNetConfig& config, const std::vector<std::vector<double>>& params,
                                   const Tensor& x) {
  ReferenceForward out;
  DTensor input(x.channels, x.height, x.width);
  std::copy(x.data.begin(), x.data.end(), input.v.begin());
  std::size_t layer = 0;
  auto next_conv = [&](const DTensor& in, int stride) {
    const auto& w = params[2 * layer];
    const auto& b = params[2 * layer + 1];
    const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(w.size()) / (b.size() * in.c))));
    ++layer;
    return conv(in, w, b, k, stride);
  };
  std::vector<DTensor> enc;
  const DTensor* cur = &input;
  for (int l = 0; l < 4; ++l) {
    enc.push_back(next_conv(*cur, 2));
    relu(enc.back(), out.relu_pattern);
    cur = &enc.back();
  }
  DTensor d = next_conv(enc.back(), 1);
  relu(d, out.relu_pattern);
  for (int s : config.skip_strides) {
    const DTensor& skip = s == 4 ? enc[1] : (s == 2 ? enc[0] : input);
    d = next_conv(stack(resize(d, x.height / s, x.width / s), skip), 1);
    relu(d, out.relu_pattern);
  }
  DTensor head = next_conv(d, 1);
  if (head.h != x.height) head = resize(head, x.height, x.width);
  out.logits = std::move(head.v);
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::vector<GradcheckSuite> run_gradcheck(const GradcheckOptions& opt) {
  GradcheckSuite params{"segnet_params"};
  GradcheckSuite ce{"weighted_ce"};
  GradcheckSuite kd{"distill_kd"};
  GradcheckSuite tv{"tversky_focal"};
  const int n = opt.size;
  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = derive_seed(opt.seed, "gradcheck", static_cast<std::uint64_t>(s));
    Rng rng(seed);

    // SegNet parameters under a random linear functional of the logits.
    SegNetConfig cfg;
    cfg.in_channels = 2;
    cfg.base_width = opt.base_width;
    cfg.skip_strides = s % 2 == 0 ? std::vector<int>{4, 2, 1} : std::vector<int>{4, 2};
    cfg.seed = seed;
    SegNet net(cfg);
    for (std::size_t p = 1; p < net.params().size(); p += 2) {
      for (float& b : net.mutable_params()[p].data) b = static_cast<float>(uniform(rng, -0.1, 0.1));
    }
    const Tensor x = random_tensor(rng, 2, n, n, 0.0, 1.0);
    const Tensor g = random_tensor(rng, 2, n, n, -1.0, 1.0);
    const auto fr = forward(net, x);
    const Gradients analytic = backward(net, fr.trace, g);
    auto theta = to_double(net);
    const auto base = reference_forward(cfg, theta, x);
    auto functional = [&](const ReferenceForward& r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < r.logits.size(); ++i) acc += r.logits[i] * g.data[i];
      return acc;
    };
    // Float and double passes sitting on different sides of a kink.
    const bool same_piece = fr.trace.relu_pattern() == base.relu_pattern;
    for (std::size_t p = 0; p < theta.size() && same_piece; ++p) {
      const std::size_t count = theta[p].size();
      std::vector<std::size_t> idx(count);
      for (std::size_t i = 0; i < count; ++i) idx[i] = i;
      if (count > static_cast<std::size_t>(opt.samples_per_tensor)) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(opt.samples_per_tensor));
      }
      double scale = 0.0;
      for (float v : analytic[p]) scale = std::max(scale, static_cast<double>(std::abs(v)));
      const double floor = std::max(kScaleFloor * scale, 1e-12);
      for (std::size_t i : idx) {
        const double orig = theta[p][i];
        const double h = opt.eps * std::max(1.0, std::abs(orig));
        theta[p][i] = orig + h;
        const auto up = reference_forward(cfg, theta, x);
        theta[p][i] = orig - h;
        const auto down = reference_forward(cfg, theta, x);
        theta[p][i] = orig;
        if (up.relu_pattern != base.relu_pattern || down.relu_pattern != base.relu_pattern) {
          ++params.skipped_kinks;
          continue;
        }
        const double numeric = (functional(up) - functional(down)) / (2 * h);
        params.max_rel_error =
            std::max(params.max_rel_error, relative_error(analytic[p][i], numeric, floor));
        ++params.checked;
      }
    }

    if (!same_piece) ++params.skipped_kinks;

    // Losses with respect to the logits.
    const Tensor logits = random_tensor(rng, 2, n, n, -3.0, 3.0);
    const ClassMask label = random_label(rng, n, 0.15);
    const WeightMap weights = weight_map(label);
    check_logit_gradient(ce, logits, [&](const Tensor& l) { return weighted_ce(l, label, weights); }, 1e-3);

    const Tensor teacher = softmax_probs(random_tensor(rng, 2, n, n, -3.0, 3.0));
    BinaryGrid valid(n, n);
    for (auto& v : valid.cells()) v = uniform01(rng) < 0.85 ? 1 : 0;
    check_logit_gradient(kd, logits, [&](const Tensor& l) { return distill_kd(teacher, l, valid); }, 1e-3);

    const ClassMask tv_label = random_label(rng, n, 0.1);
    TverskyParams tp;
    check_logit_gradient(tv, logits, [&](const Tensor& l) { return tversky_focal(l, tv_label, tp); }, 1e-3);
  }
  return {params, ce, kd, tv};
}

}  // namespace floodseg
