// Serial reference vs OpenMP convolution kernels on the SegNet layer shapes,
// plus one full network step.
//
//   bench_conv [threads]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "floodseg/kernels.hpp"
#include "floodseg/model.hpp"

using namespace floodseg;
using kernels::ConvShape;

namespace {

double best_ms(const std::function<void()>& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

std::vector<float> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> u(-1.0F, 1.0F);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) kernels::set_thread_count(std::atoi(argv[1]));
  std::printf("threads %d\n", kernels::thread_count());
  std::printf("%-28s %12s %12s %12s %12s %8s\n", "layer", "serial fwd", "omp fwd", "serial bwd", "omp bwd", "speedup");

  struct Layer {
    const char* name;
    ConvShape s;
  };
  const Layer layers[] = {
      {"enc1 2->8 64x64 s2", {2, 64, 64, 8, 3, 2, 1}},
      {"enc2 8->16 32x32 s2", {8, 32, 32, 16, 3, 2, 1}},
      {"enc3 16->32 16x16 s2", {16, 16, 16, 32, 3, 2, 1}},
      {"dec 48->8 16x16", {48, 16, 16, 8, 3, 1, 1}},
      {"enc1 2->8 320x320 s2", {2, 320, 320, 8, 3, 2, 1}},
      {"dec 16->8 160x160", {16, 160, 160, 8, 3, 1, 1}},
  };
  std::mt19937_64 rng(1);
  for (const auto& l : layers) {
    const ConvShape& s = l.s;
    const auto in = random_vec(rng, static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w);
    const auto w = random_vec(rng, s.weight_size());
    const auto b = random_vec(rng, static_cast<std::size_t>(s.out_c));
    const std::size_t out_n = static_cast<std::size_t>(s.out_c) * s.out_h() * s.out_w();
    const auto go = random_vec(rng, out_n);
    std::vector<float> out(out_n), gi(in.size()), gw(w.size()), gb(b.size());
    const int reps = out_n > 100000 ? 3 : 20;
    const double sf = best_ms([&] { kernels::serial::conv2d_forward(s, in, w, b, out); }, reps);
    const double pf = best_ms([&] { kernels::parallel::conv2d_forward(s, in, w, b, out); }, reps);
    const double sb = best_ms([&] { kernels::serial::conv2d_backward(s, in, w, go, gi, gw, gb); }, reps);
    const double pb = best_ms([&] { kernels::parallel::conv2d_backward(s, in, w, go, gi, gw, gb); }, reps);
    std::printf("%-28s %10.3fms %10.3fms %10.3fms %10.3fms %7.1fx\n", l.name, sf, pf, sb, pb, (sf + sb) / (pf + pb));
  }

  SegNetConfig cfg;
  const SegNet net(cfg);
  Tensor x(2, 64, 64);
  x.data = random_vec(rng, x.data.size());
  Tensor g(2, 64, 64);
  g.data = random_vec(rng, g.data.size());
  const double step = best_ms(
      [&] {
        const ForwardResult r = forward(net, x);
        const Gradients grads = backward(net, r.trace, g);
        (void)grads;
      },
      20);
  std::printf("SegNet forward+backward, 2x64x64: %.3f ms\n", step);
  return 0;
}
