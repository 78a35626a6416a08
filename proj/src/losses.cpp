#include "floodseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace floodseg {

namespace {

struct LogProbs {
  double dry;
  double water;
};

LogProbs log_softmax(double a, double b) {
  const double m = std::max(a, b);
  const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
  return {a - lse, b - lse};
}

void require_logits(const Tensor& logits, int width, int height, const char* what) {
  if (logits.channels != 2 || logits.width != width || logits.height != height) {
    throw SchemaError(std::string(what) + ": logits must be 2 x H x W matching the label");
  }
}

}  // namespace

LossOutput weighted_ce(const Tensor& logits, const ClassMask& label, const WeightMap& weights) {
  require_same_shape(label, weights, "weighted_ce");
  require_logits(logits, label.width(), label.height(), "weighted_ce");
  const std::size_t n = logits.plane_size();
  double total_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_ignored(label[i]) && weights[i] > 0.0F) total_w += weights[i];
  }
  if (!(total_w > 0.0)) throw DegenerateInputError("weighted_ce: all pixel weights are zero");

  LossOutput out{0.0, Tensor(2, logits.height, logits.width)};
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_ignored(label[i]) || !(weights[i] > 0.0F)) continue;
    const double w = weights[i];
    const LogProbs lp = log_softmax(logits.data[i], logits.data[n + i]);
    const bool water = label[i] == Code::Water;
    acc += w * -(water ? lp.water : lp.dry);
    const double p_water = std::exp(lp.water);
    const double p_dry = std::exp(lp.dry);
    out.grad_logits.data[i] = static_cast<float>(w * (p_dry - (water ? 0.0 : 1.0)) / total_w);
    out.grad_logits.data[n + i] = static_cast<float>(w * (p_water - (water ? 1.0 : 0.0)) / total_w);
  }
  out.value = acc / total_w;
  return out;
}

LossOutput distill_kd(const Tensor& teacher_probs, const Tensor& student_logits, const BinaryGrid& valid) {
  require_logits(student_logits, valid.width(), valid.height(), "distill_kd");
  if (!teacher_probs.same_shape(student_logits)) {
    throw SchemaError("distill_kd: teacher probabilities and student logits differ in shape");
  }
  const std::size_t n = student_logits.plane_size();
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += valid[i] != 0 ? 1 : 0;
  if (count == 0) throw DegenerateInputError("distill_kd: no valid pixels");

  LossOutput out{0.0, Tensor(2, student_logits.height, student_logits.width)};
  const double inv = 1.0 / static_cast<double>(count);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i] == 0) continue;
    const LogProbs lp = log_softmax(student_logits.data[i], student_logits.data[n + i]);
    const double t_dry = teacher_probs.data[i];
    const double t_water = teacher_probs.data[n + i];
    acc -= t_dry * lp.dry + t_water * lp.water;
    out.grad_logits.data[i] = static_cast<float>((std::exp(lp.dry) - t_dry) * inv);
    out.grad_logits.data[n + i] = static_cast<float>((std::exp(lp.water) - t_water) * inv);
  }
  out.value = acc * inv;
  return out;
}

LossOutput tversky_focal(const Tensor& logits, const ClassMask& label, const TverskyParams& prm) {
  require_logits(logits, label.width(), label.height(), "tversky_focal");
  if (!(prm.alpha > 0.0) || !(prm.beta > 0.0) || !(prm.gamma > 0.0)) {
    throw ConfigError("tversky_focal: alpha, beta and gamma must be positive");
  }
  const std::size_t n = logits.plane_size();
  std::vector<double> p(n, 0.0);
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_ignored(label[i])) continue;
    ++scored;
    p[i] = std::exp(log_softmax(logits.data[i], logits.data[n + i]).water);
    if (label[i] == Code::Water) {
      tp += p[i];
      fn += 1.0 - p[i];
    } else {
      fp += p[i];
    }
  }
  if (scored == 0) throw DegenerateInputError("tversky_focal: no DRY/WATER pixels");

  LossOutput out{0.0, Tensor(2, logits.height, logits.width)};
  const double denom = tp + prm.alpha * fp + prm.beta * fn;
  // Nothing predicted and nothing present counts as a perfect match.
  const double ti = denom > 0.0 ? tp / denom : 1.0;
  const double miss = 1.0 - ti;
  out.value = miss > 0.0 ? std::pow(miss, prm.gamma) : 0.0;
  if (!(miss > 0.0) || !(denom > 0.0)) return out;

  const double dv_dti = -prm.gamma * std::pow(miss, prm.gamma - 1.0);
  const double d2 = denom * denom;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_ignored(label[i])) continue;
    const double g = label[i] == Code::Water ? 1.0 : 0.0;
    const double ddenom = g + prm.alpha * (1.0 - g) - prm.beta * g;
    const double dti_dp = (g * denom - tp * ddenom) / d2;
    const double dp_dz = p[i] * (1.0 - p[i]);
    const double gz = dv_dti * dti_dp * dp_dz;
    out.grad_logits.data[n + i] = static_cast<float>(gz);
    out.grad_logits.data[i] = static_cast<float>(-gz);
  }
  return out;
}

}  // namespace floodseg
