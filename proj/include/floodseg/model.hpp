#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "floodseg/tensor.hpp"

namespace floodseg {

// Encoder: four stride-2 3x3 conv+ReLU blocks (features at strides 2, 4, 8,
// 16) followed by a 3x3 context block at stride 16. Decoder: for each skip
// stride, bilinear upsample, concatenate the encoder feature of that stride
// (the input image itself at stride 1) and apply 3x3 conv+ReLU. A 1x1 head
// emits two logits at the smallest skip stride, bilinearly upsampled to the
// input size.
struct SegNetConfig {
  int in_channels = 2;
  int base_width = 8;
  std::vector<int> skip_strides{4, 2};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SegNetConfig&, const SegNetConfig&) = default;
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

using Gradients = std::vector<std::vector<float>>;

class SegNet {
 public:
  SegNet() = default;
  // Fan-in scaled uniform weights, zero biases; deterministic in config.seed.
  explicit SegNet(SegNetConfig config);
  SegNet(const SegNet& other);
  SegNet& operator=(const SegNet& other);
  SegNet(SegNet&&) noexcept = default;
  SegNet& operator=(SegNet&&) noexcept = default;

  const SegNetConfig& config() const noexcept { return config_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  // Any mutable access invalidates outstanding forward traces.
  std::vector<Param>& mutable_params() noexcept {
    ++version_;
    return params_;
  }
  std::size_t parameter_count() const noexcept;
  Gradients zero_gradients() const;

  std::uint64_t identity() const noexcept { return identity_; }
  std::uint64_t version() const noexcept { return version_; }

 private:
  SegNetConfig config_;
  std::vector<Param> params_;
  std::uint64_t identity_ = 0;
  std::uint64_t version_ = 0;
};

// Closed-form parameter count for an architecture.
std::size_t expected_parameter_count(const SegNetConfig& config);

// Activations cached by forward for an exact backward pass.
struct ForwardTrace {
  std::uint64_t net_identity = 0;
  std::uint64_t net_version = 0;
  Tensor input;
  std::vector<Tensor> encoder;   // post-ReLU outputs at strides 2, 4, 8, 16
  Tensor context;                // post-ReLU
  std::vector<Tensor> decoder_in;   // concatenated decoder inputs, per skip
  std::vector<Tensor> decoder_out;  // post-ReLU, per skip
  Tensor head;                   // logits before the final upsample

  // One flag per ReLU unit (true = active), for kink detection in gradient checks.
  std::vector<bool> relu_pattern() const;
};

struct ForwardResult {
  Tensor logits;  // 2 x H x W, channel 0 = dry, 1 = water
  ForwardTrace trace;
};

// H and W must be divisible by 16; channels must equal config.in_channels.
ForwardResult forward(const SegNet& net, const Tensor& x, bool train_mode = false);
// Gradients of sum(logits * grad_logits) w.r.t. every parameter.
Gradients backward(const SegNet& net, const ForwardTrace& trace, const Tensor& grad_logits);
// Accumulating form used by the trainer.
void backward_accumulate(const SegNet& net, const ForwardTrace& trace, const Tensor& grad_logits,
                         Gradients& grads);

// Per-pixel two-class softmax with max subtraction.
Tensor softmax_probs(const Tensor& logits);

// FSNW checkpoint container.
std::vector<unsigned char> encode_checkpoint(const SegNet& net);
SegNet decode_checkpoint(std::span<const unsigned char> bytes,
                         const std::optional<SegNetConfig>& expected = std::nullopt);
void save_checkpoint(const SegNet& net, const std::filesystem::path& path);
SegNet load_checkpoint(const std::filesystem::path& path,
                       const std::optional<SegNetConfig>& expected = std::nullopt);
// FNV-1a over the encoded checkpoint bytes.
std::uint64_t checksum(const SegNet& net);

// Bilinear resize of every channel with pixel-center alignment, and its adjoint.
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
Tensor upsample_bilinear_backward(const Tensor& grad_out, int in_h, int in_w);

}  // namespace floodseg
