#include "floodseg/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "floodseg/kernels.hpp"
#include "floodseg/rng.hpp"

namespace floodseg {

namespace {

std::uint64_t next_identity() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

constexpr int kEncoderBlocks = 4;

struct LayerSpec {
  std::string name;
  int in_c;
  int out_c;
  int k;
};

int skip_channels(const SegNetConfig& c, int stride) {
  switch (stride) {
    case 4: return 2 * c.base_width;
    case 2: return c.base_width;
    default: return c.in_channels;
  }
}

std::vector<LayerSpec> layer_specs(const SegNetConfig& c) {
  const int w = c.base_width;
  std::vector<LayerSpec> specs{
      {"enc1", c.in_channels, w, 3}, {"enc2", w, 2 * w, 3},     {"enc3", 2 * w, 4 * w, 3},
      {"enc4", 4 * w, 4 * w, 3},     {"context", 4 * w, 4 * w, 3},
  };
  int prev = 4 * w;
  for (int s : c.skip_strides) {
    specs.push_back({"dec" + std::to_string(s), prev + skip_channels(c, s), w, 3});
    prev = w;
  }
  specs.push_back({"head", w, 2, 1});
  return specs;
}

constexpr std::size_t weight_index(std::size_t layer) { return 2 * layer; }
constexpr std::size_t bias_index(std::size_t layer) { return 2 * layer + 1; }

Tensor relu(Tensor t) {
  for (float& v : t.data) v = v > 0.0F ? v : 0.0F;
  return t;
}

void relu_backward(Tensor& grad, const Tensor& activated) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(activated.data[i] > 0.0F)) grad.data[i] = 0.0F;
  }
}

Tensor conv_forward(const SegNet& net, std::size_t layer, const Tensor& in, int stride) {
  const Param& w = net.params()[weight_index(layer)];
  const Param& b = net.params()[bias_index(layer)];
  const int k = w.shape[2];
  kernels::ConvShape s{in.channels, in.height, in.width, w.shape[0], k, stride, k / 2};
  Tensor out(s.out_c, s.out_h(), s.out_w());
  kernels::parallel::conv2d_forward(s, in.data, w.data, b.data, out.data);
  return out;
}

// Returns the input gradient unless `need_input_grad` is false.
Tensor conv_backward(const SegNet& net, std::size_t layer, const Tensor& in, int stride,
                     const Tensor& grad_out, Gradients& grads, bool need_input_grad) {
  const Param& w = net.params()[weight_index(layer)];
  const int k = w.shape[2];
  kernels::ConvShape s{in.channels, in.height, in.width, w.shape[0], k, stride, k / 2};
  Tensor grad_in;
  if (need_input_grad) grad_in = Tensor(in.channels, in.height, in.width);
  kernels::parallel::conv2d_backward(s, in.data, w.data, grad_out.data, grad_in.data,
                                     grads[weight_index(layer)], grads[bias_index(layer)]);
  return grad_in;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

struct Tap {
  int i0;
  int i1;
  float t;
};

std::vector<Tap> taps(int in_size, int out_size) {
  std::vector<Tap> out(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(src));
    out[o] = {i0, std::min(i0 + 1, in_size - 1), static_cast<float>(src - i0)};
  }
  return out;
}

const Tensor& feature_at_stride(const ForwardTrace& t, int stride) {
  switch (stride) {
    case 4: return t.encoder[1];
    case 2: return t.encoder[0];
    default: return t.input;
  }
}

}  // namespace

void SegNetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (skip_strides.empty()) throw ConfigError("skip_strides must not be empty");
  for (std::size_t i = 0; i < skip_strides.size(); ++i) {
    const int s = skip_strides[i];
    if (s != 4 && s != 2 && s != 1) throw ConfigError("skip strides must be drawn from {4, 2, 1}");
    if (i > 0 && s >= skip_strides[i - 1]) throw ConfigError("skip_strides must be strictly descending");
  }
}

SegNet::SegNet(SegNetConfig config) : config_(std::move(config)), identity_(next_identity()) {
  config_.validate();
  const auto specs = layer_specs(config_);
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& sp = specs[l];
    const int fan_in = sp.in_c * sp.k * sp.k;
    const double bound = std::sqrt(6.0 / fan_in);
    Rng rng(derive_seed(config_.seed, sp.name));
    Param w{sp.name + ".weight", {sp.out_c, sp.in_c, sp.k, sp.k}, {}};
    w.data.resize(static_cast<std::size_t>(sp.out_c) * sp.in_c * sp.k * sp.k);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (float& v : w.data) v = static_cast<float>(dist(rng));
    params_.push_back(std::move(w));
    params_.push_back({sp.name + ".bias", {sp.out_c}, std::vector<float>(sp.out_c, 0.0F)});
  }
}

SegNet::SegNet(const SegNet& other)
    : config_(other.config_), params_(other.params_), identity_(next_identity()) {}

SegNet& SegNet::operator=(const SegNet& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    identity_ = next_identity();
    version_ = 0;
  }
  return *this;
}

std::size_t SegNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.data.size();
  return n;
}

Gradients SegNet::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.data.size(), 0.0F);
  return g;
}

std::size_t expected_parameter_count(const SegNetConfig& c) {
  const std::size_t w = static_cast<std::size_t>(c.base_width);
  const std::size_t in = static_cast<std::size_t>(c.in_channels);
  std::size_t n = 9 * in * w + w                // enc1
                  + 9 * w * 2 * w + 2 * w        // enc2
                  + 9 * 2 * w * 4 * w + 4 * w    // enc3
                  + 2 * (9 * 4 * w * 4 * w + 4 * w);  // enc4, context
  std::size_t prev = 4 * w;
  for (int s : c.skip_strides) {
    const std::size_t skip = s == 4 ? 2 * w : (s == 2 ? w : in);
    n += 9 * (prev + skip) * w + w;
    prev = w;
  }
  return n + 2 * w + 2;  // head
}

std::vector<bool> ForwardTrace::relu_pattern() const {
  std::vector<bool> bits;
  auto add = [&](const Tensor& t) {
    for (float v : t.data) bits.push_back(v > 0.0F);
  };
  for (const auto& t : encoder) add(t);
  add(context);
  for (const auto& t : decoder_out) add(t);
  return bits;
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  const auto xs = taps(x.width, out_w);
  const auto ys = taps(x.height, out_h);
  Tensor out(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c) {
    auto src = x.plane(c);
    auto dst = out.plane(c);
    for (int r = 0; r < out_h; ++r) {
      const float* row0 = src.data() + static_cast<std::size_t>(ys[r].i0) * x.width;
      const float* row1 = src.data() + static_cast<std::size_t>(ys[r].i1) * x.width;
      const float ty = ys[r].t;
      for (int col = 0; col < out_w; ++col) {
        const Tap& t = xs[col];
        const float top = row0[t.i0] + t.t * (row0[t.i1] - row0[t.i0]);
        const float bottom = row1[t.i0] + t.t * (row1[t.i1] - row1[t.i0]);
        dst[static_cast<std::size_t>(r) * out_w + col] = top + ty * (bottom - top);
      }
    }
  }
  return out;
}

Tensor upsample_bilinear_backward(const Tensor& grad_out, int in_h, int in_w) {
  const auto xs = taps(in_w, grad_out.width);
  const auto ys = taps(in_h, grad_out.height);
  Tensor grad_in(grad_out.channels, in_h, in_w);
  for (int c = 0; c < grad_out.channels; ++c) {
    auto g = grad_out.plane(c);
    auto dst = grad_in.plane(c);
    for (int r = 0; r < grad_out.height; ++r) {
      float* row0 = dst.data() + static_cast<std::size_t>(ys[r].i0) * in_w;
      float* row1 = dst.data() + static_cast<std::size_t>(ys[r].i1) * in_w;
      const float ty = ys[r].t;
      for (int col = 0; col < grad_out.width; ++col) {
        const Tap& t = xs[col];
        const float v = g[static_cast<std::size_t>(r) * grad_out.width + col];
        const float top = v * (1.0F - ty);
        const float bottom = v * ty;
        row0[t.i0] += top * (1.0F - t.t);
        row0[t.i1] += top * t.t;
        row1[t.i0] += bottom * (1.0F - t.t);
        row1[t.i1] += bottom * t.t;
      }
    }
  }
  return grad_in;
}

ForwardResult forward(const SegNet& net, const Tensor& x, bool /*train_mode*/) {
  const auto& cfg = net.config();
  if (x.channels != cfg.in_channels) {
    throw SchemaError("forward: input has " + std::to_string(x.channels) + " channels, net expects " +
                      std::to_string(cfg.in_channels));
  }
  if (x.height % 16 != 0 || x.width % 16 != 0 || x.height == 0 || x.width == 0) {
    throw SchemaError("forward: input height and width must be positive multiples of 16");
  }
  ForwardResult res;
  ForwardTrace& t = res.trace;
  t.net_identity = net.identity();
  t.net_version = net.version();
  t.input = x;
  const Tensor* cur = &t.input;
  for (int l = 0; l < kEncoderBlocks; ++l) {
    t.encoder.push_back(relu(conv_forward(net, static_cast<std::size_t>(l), *cur, 2)));
    cur = &t.encoder.back();
  }
  t.context = relu(conv_forward(net, kEncoderBlocks, t.encoder.back(), 1));
  const Tensor* d = &t.context;
  std::size_t layer = kEncoderBlocks + 1;
  for (int s : cfg.skip_strides) {
    Tensor up = upsample_bilinear(*d, x.height / s, x.width / s);
    t.decoder_in.push_back(concat(up, feature_at_stride(t, s)));
    t.decoder_out.push_back(relu(conv_forward(net, layer++, t.decoder_in.back(), 1)));
    d = &t.decoder_out.back();
  }
  t.head = conv_forward(net, layer, *d, 1);
  res.logits = cfg.skip_strides.back() == 1 ? t.head : upsample_bilinear(t.head, x.height, x.width);
  return res;
}

void backward_accumulate(const SegNet& net, const ForwardTrace& t, const Tensor& grad_logits,
                         Gradients& grads) {
  if (t.net_identity != net.identity() || t.net_version != net.version()) {
    throw ContractError("backward: trace was produced by a different or since-modified network");
  }
  if (grad_logits.channels != 2 || grad_logits.height != t.input.height ||
      grad_logits.width != t.input.width) {
    throw SchemaError("backward: grad_logits must be 2 x H x W of the traced input");
  }
  if (grads.size() != net.params().size()) throw SchemaError("backward: gradient buffer mismatch");
  const auto& cfg = net.config();
  const std::size_t n_dec = cfg.skip_strides.size();
  const std::size_t head_layer = kEncoderBlocks + 1 + n_dec;

  Tensor g_head = cfg.skip_strides.back() == 1
                      ? grad_logits
                      : upsample_bilinear_backward(grad_logits, t.head.height, t.head.width);
  const Tensor& last = n_dec > 0 ? t.decoder_out.back() : t.context;
  Tensor g_d = conv_backward(net, head_layer, last, 1, g_head, grads, true);

  // Skip-feature gradients for encoder[0] (stride 2) and encoder[1] (stride 4).
  Tensor g_skip0(t.encoder[0].channels, t.encoder[0].height, t.encoder[0].width);
  Tensor g_skip1(t.encoder[1].channels, t.encoder[1].height, t.encoder[1].width);

  for (std::size_t i = n_dec; i-- > 0;) {
    relu_backward(g_d, t.decoder_out[i]);
    Tensor g_cat = conv_backward(net, kEncoderBlocks + 1 + i, t.decoder_in[i], 1, g_d, grads, true);
    const Tensor& prev = i == 0 ? t.context : t.decoder_out[i - 1];
    const int s = cfg.skip_strides[i];
    Tensor g_up(prev.channels, g_cat.height, g_cat.width);
    std::copy(g_cat.data.begin(), g_cat.data.begin() + static_cast<std::ptrdiff_t>(g_up.data.size()),
              g_up.data.begin());
    if (s == 4 || s == 2) {
      Tensor& dst = s == 4 ? g_skip1 : g_skip0;
      for (std::size_t j = 0; j < dst.data.size(); ++j) dst.data[j] += g_cat.data[g_up.data.size() + j];
    }
    g_d = upsample_bilinear_backward(g_up, prev.height, prev.width);
  }

  relu_backward(g_d, t.context);
  Tensor g_enc = conv_backward(net, kEncoderBlocks, t.encoder[3], 1, g_d, grads, true);
  for (int l = kEncoderBlocks - 1; l >= 0; --l) {
    if (l == 1) {
      for (std::size_t j = 0; j < g_enc.data.size(); ++j) g_enc.data[j] += g_skip1.data[j];
    } else if (l == 0) {
      for (std::size_t j = 0; j < g_enc.data.size(); ++j) g_enc.data[j] += g_skip0.data[j];
    }
    relu_backward(g_enc, t.encoder[static_cast<std::size_t>(l)]);
    const Tensor& in = l == 0 ? t.input : t.encoder[static_cast<std::size_t>(l - 1)];
    g_enc = conv_backward(net, static_cast<std::size_t>(l), in, 2, g_enc, grads, l > 0);
  }
}

Gradients backward(const SegNet& net, const ForwardTrace& trace, const Tensor& grad_logits) {
  Gradients g = net.zero_gradients();
  backward_accumulate(net, trace, grad_logits, g);
  return g;
}

Tensor softmax_probs(const Tensor& logits) {
  if (logits.channels != 2) throw SchemaError("softmax_probs expects 2 channels");
  Tensor p(2, logits.height, logits.width);
  const std::size_t n = logits.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const float a = logits.data[i];
    const float b = logits.data[n + i];
    const float m = std::max(a, b);
    const float ea = std::exp(a - m);
    const float eb = std::exp(b - m);
    const float s = ea + eb;
    p.data[n + i] = eb / s;
    p.data[i] = 1.0F - p.data[n + i];
  }
  return p;
}

}  // namespace floodseg
