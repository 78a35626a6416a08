#pragma once

#include "floodseg/grid.hpp"
#include "floodseg/tensor.hpp"

namespace floodseg {

struct LossOutput {
  double value = 0.0;
  Tensor grad_logits;  // 2 x H x W
};

// sum(w * -log p_true) / sum(w) over pixels with w > 0. CLOUD/INVALID pixels
// never contribute, whatever their weight.
LossOutput weighted_ce(const Tensor& logits, const ClassMask& label, const WeightMap& weights);

// Mean over valid pixels of -sum_k p_t[k] log p_s[k]; the gradient w.r.t. the
// student logits is (p_s - p_t) / |valid|.
LossOutput distill_kd(const Tensor& teacher_probs, const Tensor& student_logits, const BinaryGrid& valid);

struct TverskyParams {
  double alpha = 0.7;  // false-positive weight
  double beta = 0.3;   // false-negative weight
  double gamma = 0.75;
};

// (1 - TI)^gamma with TI = TP / (TP + alpha FP + beta FN) over soft water
// probabilities of the DRY/WATER pixels.
LossOutput tversky_focal(const Tensor& logits, const ClassMask& label, const TverskyParams& params = {});

}  // namespace floodseg
