#include "floodseg/kernels.hpp"

namespace floodseg::kernels::serial {

void conv2d_forward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  for (int co = 0; co < s.out_c; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float acc = bias.empty() ? 0.0F : bias[co];
        for (int ci = 0; ci < s.in_c; ++ci) {
          for (int ky = 0; ky < s.k; ++ky) {
            const int iy = oy * s.stride + ky - s.pad;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int kx = 0; kx < s.k; ++kx) {
              const int ix = ox * s.stride + kx - s.pad;
              if (ix < 0 || ix >= s.in_w) continue;
              acc += weight[((static_cast<std::size_t>(co) * s.in_c + ci) * s.k + ky) * s.k + kx] *
                     in[(static_cast<std::size_t>(ci) * s.in_h + iy) * s.in_w + ix];
            }
          }
        }
        out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                     std::span<const float> grad_out, std::span<float> grad_in,
                     std::span<float> grad_weight, std::span<float> grad_bias) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  auto g = [&](int co, int oy, int ox) {
    return grad_out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox];
  };

  for (int co = 0; co < s.out_c; ++co) {
    if (!grad_bias.empty()) {
      float acc = 0.0F;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) acc += g(co, oy, ox);
      }
      grad_bias[co] += acc;
    }
    for (int ci = 0; ci < s.in_c; ++ci) {
      for (int ky = 0; ky < s.k; ++ky) {
        for (int kx = 0; kx < s.k; ++kx) {
          float acc = 0.0F;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s.stride + ky - s.pad;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s.stride + kx - s.pad;
              if (ix < 0 || ix >= s.in_w) continue;
              acc += g(co, oy, ox) * in[(static_cast<std::size_t>(ci) * s.in_h + iy) * s.in_w + ix];
            }
          }
          grad_weight[((static_cast<std::size_t>(co) * s.in_c + ci) * s.k + ky) * s.k + kx] += acc;
        }
      }
    }
  }

  if (grad_in.empty()) return;
  // Gather form: each input pixel sums over the outputs whose window covers it.
  for (int ci = 0; ci < s.in_c; ++ci) {
    for (int iy = 0; iy < s.in_h; ++iy) {
      for (int ix = 0; ix < s.in_w; ++ix) {
        float acc = 0.0F;
        for (int co = 0; co < s.out_c; ++co) {
          for (int ky = 0; ky < s.k; ++ky) {
            const int ny = iy + s.pad - ky;
            if (ny < 0 || ny % s.stride != 0 || ny / s.stride >= oh) continue;
            for (int kx = 0; kx < s.k; ++kx) {
              const int nx = ix + s.pad - kx;
              if (nx < 0 || nx % s.stride != 0 || nx / s.stride >= ow) continue;
              acc += weight[((static_cast<std::size_t>(co) * s.in_c + ci) * s.k + ky) * s.k + kx] *
                     g(co, ny / s.stride, nx / s.stride);
            }
          }
        }
        grad_in[(static_cast<std::size_t>(ci) * s.in_h + iy) * s.in_w + ix] = acc;
      }
    }
  }
}

}  // namespace floodseg::kernels::serial
