#include <doctest.h>

#include <cmath>
#include <random>

#include "floodseg/errors.hpp"
#include "floodseg/eval.hpp"
#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace floodseg;

namespace {

ClassMask mask_of(int w, int h, std::initializer_list<int> codes) {
  ClassMask m(w, h);
  int i = 0;
  for (int c : codes) m[static_cast<std::size_t>(i++)] = static_cast<Code>(c);
  return m;
}

ClassMask swap_classes(ClassMask m) {
  for (auto& c : m.cells()) {
    if (c == Code::Dry) {
      c = Code::Water;
    } else if (c == Code::Water) {
      c = Code::Dry;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("confusion and pooled_iou examples") {
  // D W C I / W W D D
  const ClassMask truth = mask_of(4, 2, {0, 1, 2, 3, 1, 1, 0, 0});
  const ClassMask pred = mask_of(4, 2, {1, 1, 1, 1, 0, 1, 2, 0});
  const ConfusionCounts c = confusion(pred, truth);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 2);
  CHECK(c.scored() == 6);
  const ConfusionCounts one[] = {c};
  CHECK(pooled_iou(one) == doctest::Approx(0.5));

  // micro, not macro: 9/10 and 0/1 pool to 9/11
  const ConfusionCounts two[] = {{9, 1, 0, 0}, {0, 1, 0, 5}};
  CHECK(pooled_iou(two) == doctest::Approx(9.0 / 11.0));

  const ConfusionCounts none[] = {{0, 0, 0, 7}};
  CHECK_THROWS_AS(pooled_iou(none), DegenerateInputError);
  CHECK_THROWS(confusion(ClassMask(2, 2), ClassMask(3, 2)));
}

TEST_CASE("confusion and pooled_iou match brute force") {
  std::mt19937_64 rng(71);
  for (int t = 0; t < 60; ++t) {
    const int n = 1 + static_cast<int>(rng() % 4);
    std::vector<ClassMask> preds, truths;
    std::vector<ConfusionCounts> counts;
    for (int k = 0; k < n; ++k) {
      const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
      truths.push_back(fixture::random_mask(rng, w, h, 0.2));
      preds.push_back(fixture::random_mask(rng, w, h, 0.1));
      const ConfusionCounts got = confusion(preds.back(), truths.back());
      const oracle::Counts want = oracle::confusion(preds.back(), truths.back());
      REQUIRE(got.tp == want.tp);
      REQUIRE(got.fp == want.fp);
      REQUIRE(got.fn == want.fn);
      REQUIRE(got.tn == want.tn);
      counts.push_back(got);
    }
    ConfusionCounts total;
    for (const auto& c : counts) total += c;
    if (total.tp + total.fp + total.fn == 0) continue;
    REQUIRE(pooled_iou(counts) == doctest::Approx(oracle::pooled_iou(preds, truths)).epsilon(1e-12));
  }
}

TEST_CASE("swapping DRY and WATER swaps tp with tn and fp with fn") {
  std::mt19937_64 rng(72);
  for (int t = 0; t < 20; ++t) {
    const ClassMask truth = fixture::random_mask(rng, 24, 17, 0.2);
    ClassMask pred = fixture::random_mask(rng, 24, 17, 0.0);
    const ConfusionCounts a = confusion(pred, truth);
    const ConfusionCounts b = confusion(swap_classes(pred), swap_classes(truth));
    CHECK(a.tp == b.tn);
    CHECK(a.tn == b.tp);
    CHECK(a.fp == b.fn);
    CHECK(a.fn == b.fp);
  }
}

TEST_CASE("ignored truth never counts, whatever is predicted") {
  std::mt19937_64 rng(73);
  const ClassMask truth = fixture::random_mask(rng, 30, 30, 0.4);
  const ClassMask pred = fixture::random_mask(rng, 30, 30, 0.0);
  ClassMask other = pred;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (oracle::ignored(truth[i])) other[i] = other[i] == Code::Water ? Code::Dry : Code::Water;
  }
  CHECK(confusion(pred, truth) == confusion(other, truth));
}

TEST_CASE("probs_to_mask and water_probability") {
  Tensor p(2, 1, 3);
  p.data = {0.2F, 0.5F, 0.9F, 0.8F, 0.5F, 0.1F};
  const ClassMask m = probs_to_mask(p);
  CHECK(m[0] == Code::Water);
  CHECK(m[1] == Code::Dry);
  CHECK(m[2] == Code::Dry);
  const Grid<float> w = water_probability(p);
  CHECK(w[0] == 0.8F);
  CHECK(w[2] == 0.1F);
  CHECK_THROWS_AS(probs_to_mask(Tensor(3, 1, 1)), SchemaError);
}

TEST_CASE("ece examples") {
  // confident and right everywhere
  const ClassMask truth = mask_of(2, 1, {1, 0});
  CHECK(ece(Grid<float>(2, 1, std::vector<float>{1.0F, 0.0F}), truth) == doctest::Approx(0.0));
  // always 0.75 water, half of it right: |0.5 - 0.75|
  const ClassMask half = mask_of(4, 1, {1, 0, 1, 0});
  CHECK(ece(Grid<float>(4, 1, 0.75F), half) == doctest::Approx(0.25));
  // confident and wrong
  CHECK(ece(Grid<float>(2, 1, std::vector<float>{0.0F, 1.0F}), truth) == doctest::Approx(1.0));
  CHECK_THROWS_AS(ece(Grid<float>(2, 1, 0.5F), truth, 0), ConfigError);
  CHECK_THROWS_AS(ece(Grid<float>(1, 1, 0.5F), ClassMask(1, 1, Code::Cloud)), DegenerateInputError);
}

TEST_CASE("ece matches brute force") {
  std::mt19937_64 rng(74);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  for (int t = 0; t < 50; ++t) {
    const int w = 1 + static_cast<int>(rng() % 30), h = 1 + static_cast<int>(rng() % 30);
    ClassMask truth = fixture::random_mask(rng, w, h, 0.1);
    truth[0] = Code::Dry;
    Grid<float> probs(w, h);
    for (auto& v : probs.cells()) v = (rng() % 8 == 0) ? std::round(u(rng) * 10.0F) / 10.0F : u(rng);
    const int bins = 1 + static_cast<int>(rng() % 15);
    REQUIRE(ece(probs, truth, bins) ==
            doctest::Approx(oracle::ece(std::vector<float>(probs.cells().begin(), probs.cells().end()), truth, bins))
                .epsilon(1e-9));
    const double e = ece(probs, truth, bins);
    REQUIRE(e >= 0.0);
    REQUIRE(e <= 1.0);
  }
}

TEST_CASE("infer_10m resamples through the model grid") {
  std::mt19937_64 rng(75);
  SegNetConfig cfg;
  cfg.seed = 5;
  const SegNet net(cfg);
  std::uniform_real_distribution<float> vv(-25.0F, 2.0F), vh(-35.0F, 2.0F);
  std::vector<float> a(512 * 512), b(512 * 512);
  for (auto& v : a) v = vv(rng);
  for (auto& v : b) v = vh(rng);
  const Raster s1 = fixture::raster_of(512, 512, {{"VV", a}, {"VH", b}}, 10.0F);
  const Inference10m r = infer_10m(net, s1);
  CHECK(r.internal_width == 320);
  CHECK(r.internal_height == 320);
  CHECK(r.probs.channels == 2);
  CHECK(r.probs.width == 512);
  CHECK(r.probs.height == 512);
  const std::size_t n = r.probs.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const float d = r.probs.data[i], w = r.probs.data[n + i];
    REQUIRE(d >= 0.0F);
    REQUIRE(w >= 0.0F);
    REQUIRE(d + w == 1.0F);
  }

  const Raster odd = fixture::raster_of(100, 100, {{"VV", std::vector<float>(10000, -10.0F)},
                                                   {"VH", std::vector<float>(10000, -20.0F)}},
                                        10.0F);
  CHECK_THROWS_AS(infer_10m(net, odd), SchemaError);
}

TEST_CASE("PNG round trip") {
  fixture::TempDir dir("png");
  const ClassMask m = mask_of(4, 1, {0, 1, 2, 3});
  render_png(m, dir / "m.png");
  const RgbImage img = read_png(dir / "m.png");
  REQUIRE(img.width == 4);
  REQUIRE(img.height == 1);
  CHECK(img.pixels[0] == Rgb{0, 128, 0});
  CHECK(img.pixels[1] == Rgb{0, 0, 255});
  CHECK(img.pixels[2] == Rgb{255, 255, 255});
  CHECK(img.pixels[3] == Rgb{0, 0, 0});

  render_png(Grid<float>(3, 2, std::vector<float>{0.0F, 0.5F, 1.0F, 2.0F, NAN, -1.0F}), dir / "p.png");
  const RgbImage p = read_png(dir / "p.png");
  REQUIRE(p.pixels.size() == 6);
  CHECK(p.pixels[0] == Rgb{0, 0, 0});
  CHECK(p.pixels[1] == Rgb{0, 0, 128});
  CHECK(p.pixels[2] == Rgb{0, 0, 255});
  CHECK(p.pixels[3] == Rgb{0, 0, 255});
  CHECK(p.pixels[4] == Rgb{0, 0, 0});
  CHECK(p.pixels[5] == Rgb{0, 0, 0});

  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  CHECK_THROWS_AS(render_png(m, dir / "no" / "such" / "dir.png"), IoError);
}
