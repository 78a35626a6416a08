#pragma once

#include <span>

namespace floodseg::kernels {

// Square-kernel 2D convolution (cross-correlation) with zero padding.
// Weights are laid out [out_c][in_c][k][k]; images are C x H x W.
struct ConvShape {
  int in_c = 0;
  int in_h = 0;
  int in_w = 0;
  int out_c = 0;
  int k = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const noexcept { return (in_h + 2 * pad - k) / stride + 1; }
  int out_w() const noexcept { return (in_w + 2 * pad - k) / stride + 1; }
  std::size_t weight_size() const noexcept {
    return static_cast<std::size_t>(out_c) * in_c * k * k;
  }
};

// Backward contract for both variants: grad_weight and grad_bias are
// accumulated into (+=); grad_in is overwritten and may be empty to skip it.

// Straight transcription of the definition, one output element at a time.
// Kept as the reference the optimized kernels are tested against.
namespace serial {
void conv2d_forward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out);
void conv2d_backward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                     std::span<const float> grad_out, std::span<float> grad_in,
                     std::span<float> grad_weight, std::span<float> grad_bias);
}  // namespace serial

// im2col followed by register-tiled matrix products, OpenMP-parallel over
// output tiles. Each output value is produced by a single thread in a fixed
// order, so results do not depend on the thread count.
namespace parallel {
void conv2d_forward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                    std::span<const float> bias, std::span<float> out);
void conv2d_backward(const ConvShape& s, std::span<const float> in, std::span<const float> weight,
                     std::span<const float> grad_out, std::span<float> grad_in,
                     std::span<float> grad_weight, std::span<float> grad_bias);
}  // namespace parallel

void set_thread_count(int n);
int thread_count();

}  // namespace floodseg::kernels
