#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "floodseg/kernels.hpp"
#include "../support/oracles.hpp"

using namespace floodseg::kernels;

namespace {

struct Case {
  ConvShape s;
  std::vector<float> in, weight, bias, grad_out;
};

Case random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ch(1, 19), dim(1, 23);
  std::uniform_real_distribution<float> u(-1.0F, 1.0F);
  Case c;
  c.s.in_c = ch(rng);
  c.s.out_c = ch(rng);
  c.s.in_h = dim(rng);
  c.s.in_w = dim(rng);
  c.s.k = (rng() % 2) ? 3 : 1;
  c.s.pad = c.s.k == 3 ? 1 : 0;
  c.s.stride = 1 + static_cast<int>(rng() % 2);
  auto fill = [&](std::vector<float>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) x = u(rng);
  };
  fill(c.in, static_cast<std::size_t>(c.s.in_c) * c.s.in_h * c.s.in_w);
  fill(c.weight, c.s.weight_size());
  fill(c.bias, static_cast<std::size_t>(c.s.out_c));
  fill(c.grad_out, static_cast<std::size_t>(c.s.out_c) * c.s.out_h() * c.s.out_w());
  return c;
}

// Adjoint of the convolution, written from the forward definition.
void brute_backward(const Case& c, std::vector<double>& gi, std::vector<double>& gw, std::vector<double>& gb) {
  const ConvShape& s = c.s;
  gi.assign(c.in.size(), 0.0);
  gw.assign(c.weight.size(), 0.0);
  gb.assign(c.bias.size(), 0.0);
  for (int o = 0; o < s.out_c; ++o) {
    for (int y = 0; y < s.out_h(); ++y) {
      for (int x = 0; x < s.out_w(); ++x) {
        const double g = c.grad_out[(o * s.out_h() + y) * s.out_w() + x];
        gb[o] += g;
        for (int i = 0; i < s.in_c; ++i) {
          for (int ky = 0; ky < s.k; ++ky) {
            for (int kx = 0; kx < s.k; ++kx) {
              const int yy = y * s.stride - s.pad + ky, xx = x * s.stride - s.pad + kx;
              if (yy < 0 || yy >= s.in_h || xx < 0 || xx >= s.in_w) continue;
              const std::size_t wi = ((o * s.in_c + i) * s.k + ky) * s.k + kx;
              const std::size_t ii = (i * s.in_h + yy) * s.in_w + xx;
              gw[wi] += g * c.in[ii];
              gi[ii] += g * c.weight[wi];
            }
          }
        }
      }
    }
  }
}

template <typename A, typename B>
void require_close(const A& got, const B& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    REQUIRE(std::abs(got[i] - want[i]) <= tol * (1.0 + std::abs(want[i])));
  }
}

}  // namespace

TEST_CASE("serial and parallel forward match the double-precision definition") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 60; ++t) {
    const Case c = random_case(rng);
    const auto want = oracle::conv2d(c.in, c.s.in_c, c.s.in_h, c.s.in_w, c.weight, c.bias, c.s.out_c, c.s.k,
                                     c.s.stride, c.s.pad);
    std::vector<float> a(want.size()), b(want.size());
    serial::conv2d_forward(c.s, c.in, c.weight, c.bias, a);
    parallel::conv2d_forward(c.s, c.in, c.weight, c.bias, b);
    require_close(a, want, 1e-5);
    require_close(b, want, 1e-5);
  }
}

TEST_CASE("serial and parallel backward match the adjoint definition") {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 60; ++t) {
    const Case c = random_case(rng);
    std::vector<double> gi, gw, gb;
    brute_backward(c, gi, gw, gb);
    for (int variant = 0; variant < 2; ++variant) {
      // grad_weight and grad_bias accumulate; start from a known offset
      std::vector<float> in_grad(c.in.size(), 123.0F), w_grad(c.weight.size(), 0.5F), b_grad(c.bias.size(), -0.25F);
      if (variant == 0) {
        serial::conv2d_backward(c.s, c.in, c.weight, c.grad_out, in_grad, w_grad, b_grad);
      } else {
        parallel::conv2d_backward(c.s, c.in, c.weight, c.grad_out, in_grad, w_grad, b_grad);
      }
      std::vector<double> w_want = gw, b_want = gb;
      for (auto& v : w_want) v += 0.5;
      for (auto& v : b_want) v -= 0.25;
      require_close(in_grad, gi, 1e-5);
      require_close(w_grad, w_want, 1e-5);
      require_close(b_grad, b_want, 1e-5);
    }
  }
}

TEST_CASE("empty grad_in skips the input gradient") {
  std::mt19937_64 rng(33);
  const Case c = random_case(rng);
  std::vector<float> w1(c.weight.size()), b1(c.bias.size()), w2(c.weight.size()), b2(c.bias.size());
  std::vector<float> gi(c.in.size());
  parallel::conv2d_backward(c.s, c.in, c.weight, c.grad_out, {}, w1, b1);
  parallel::conv2d_backward(c.s, c.in, c.weight, c.grad_out, gi, w2, b2);
  CHECK(w1 == w2);
  CHECK(b1 == b2);
}

TEST_CASE("parallel results do not depend on the thread count") {
  std::mt19937_64 rng(34);
  const int saved = thread_count();
  for (int t = 0; t < 20; ++t) {
    Case c = random_case(rng);
    std::vector<float> ref_out, ref_gi, ref_gw, ref_gb;
    for (int threads : {1, 2, 3, 4}) {
      set_thread_count(threads);
      std::vector<float> out(c.grad_out.size()), gi(c.in.size()), gw(c.weight.size()), gb(c.bias.size());
      parallel::conv2d_forward(c.s, c.in, c.weight, c.bias, out);
      parallel::conv2d_backward(c.s, c.in, c.weight, c.grad_out, gi, gw, gb);
      if (threads == 1) {
        ref_out = out;
        ref_gi = gi;
        ref_gw = gw;
        ref_gb = gb;
      } else {
        REQUIRE(out == ref_out);
        REQUIRE(gi == ref_gi);
        REQUIRE(gw == ref_gw);
        REQUIRE(gb == ref_gb);
      }
    }
  }
  set_thread_count(saved);
}

TEST_CASE("bias-free convolution is linear in its input") {
  std::mt19937_64 rng(35);
  Case c = random_case(rng);
  std::vector<float> zero(c.bias.size(), 0.0F), twice = c.in;
  for (auto& v : twice) v *= 2.0F;
  std::vector<float> a(c.grad_out.size()), b(c.grad_out.size());
  parallel::conv2d_forward(c.s, c.in, c.weight, zero, a);
  parallel::conv2d_forward(c.s, twice, c.weight, zero, b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == 2.0F * a[i]);
}
