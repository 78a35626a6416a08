#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "floodseg/model.hpp"

namespace floodseg {

// Double-precision re-implementation of the SegNet forward pass, written
// independently of the float kernels. Finite differences are taken on it so
// that float rounding does not swamp the difference quotients.
struct ReferenceForward {
  std::vector<double> logits;  // 2 x H x W
  std::vector<bool> relu_pattern;
};
ReferenceForward reference_forward(const SegNetConfig& config, const std::vector<std::vector<double>>& params,
                                   const Tensor& x);

struct GradcheckOptions {
  int seeds = 20;
  int size = 16;
  int base_width = 8;
  int samples_per_tensor = 32;  // parameter entries checked per tensor and seed
  double eps = 1e-5;
  std::uint64_t seed = 0;
};

struct GradcheckSuite {
  std::string name;
  double max_rel_error = 0.0;
  long checked = 0;
  long skipped_kinks = 0;  // perturbation flipped a ReLU unit
};

// Relative error |a - f| / max(|a|, |f|, floor) between an analytic and a
// finite-difference derivative. Parameter checks use 1% of the tensor's
// largest analytic gradient as the floor.
double relative_error(double analytic, double numeric, double floor = 1e-6);

std::vector<GradcheckSuite> run_gradcheck(const GradcheckOptions& options = {});

}  // namespace floodseg
