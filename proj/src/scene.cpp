#include <algorithm>
#include <cmath>
#include <numbers>

#include "floodseg/datagen.hpp"

namespace floodseg {

void SceneParams::validate() const {
  if (!(water_fraction >= 0.0 && water_fraction < 1.0)) throw ConfigError("water_fraction must be in [0, 1)");
  if (!(cloud_cover >= 0.0 && cloud_cover <= 1.0)) throw ConfigError("cloud_cover must be in [0, 1]");
  if (!(river_width > 0.0 && river_width < 0.5)) throw ConfigError("river_width must be in (0, 0.5)");
  if (!(shallow_fraction >= 0.0 && shallow_fraction <= 1.0)) throw ConfigError("shallow_fraction must be in [0, 1]");
  if (max_flood_lobes < 0) throw ConfigError("max_flood_lobes must be >= 0");
  if (cloud_shadow_shift < 0) throw ConfigError("cloud_shadow_shift must be >= 0");
  if (dark_patches < 0) throw ConfigError("dark_patches must be >= 0");
  if (!(speckle_looks > 0.0)) throw ConfigError("speckle_looks must be > 0");
  if (!(resolution_m > 0.0F)) throw ConfigError("resolution_m must be > 0");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Ellipse {
  double cy;
  double cx;
  double ry;
  double rx;
  double angle;

  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const double u = (dx * ca + dy * sa) / rx;
    const double v = (-dx * sa + dy * ca) / ry;
    return u * u + v * v <= 1.0;
  }
};

// Smooth terrain texture in roughly [-1, 1].
Grid<float> terrain_field(Rng& rng, int size) {
  Grid<float> f(size, size);
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) {
    waves.push_back({uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0), uniform(rng, 0.0, kTwoPi),
                     uniform(rng, 0.15, 0.35)});
  }
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double v = 0.0;
      for (const auto& w : waves) {
        v += w.amp * std::sin(kTwoPi * (w.fy * r + w.fx * c) / size + w.phase);
      }
      f.at(r, c) = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  }
  return f;
}

std::size_t count_set(const BinaryGrid& g) {
  std::size_t n = 0;
  for (auto v : g.cells()) n += v;
  return n;
}

}  // namespace

SceneBundle generate_scene(std::uint64_t seed, int size, const SceneParams& params) {
  if (size < 32) throw ConfigError("scene size must be >= 32");
  params.validate();
  Rng rng(derive_seed(seed, "scene"));
  const auto n = static_cast<std::size_t>(size) * size;
  const bool transpose = uniform01(rng) < 0.5;
  auto cell = [&](int a, int b) -> std::pair<int, int> { return transpose ? std::pair{b, a} : std::pair{a, b}; };

  // River: center line y(x) with two superposed meanders and a varying width.
  BinaryGrid river(size, size);
  BinaryGrid water(size, size);
  BinaryGrid shallow(size, size);
  std::vector<Ellipse> lobes;
  if (params.water_fraction > 0.0) {
    const double y0 = size * uniform(rng, 0.3, 0.7);
    const double a1 = size * uniform(rng, 0.05, 0.15);
    const double l1 = size * uniform(rng, 0.6, 1.2);
    const double p1 = uniform(rng, 0.0, kTwoPi);
    const double a2 = size * uniform(rng, 0.01, 0.04);
    const double l2 = size * uniform(rng, 0.2, 0.4);
    const double p2 = uniform(rng, 0.0, kTwoPi);
    const double width = std::max(2.0, params.river_width * size);
    const double wphase = uniform(rng, 0.0, kTwoPi);
    auto center = [&](double x) {
      return y0 + a1 * std::sin(kTwoPi * x / l1 + p1) + a2 * std::sin(kTwoPi * x / l2 + p2);
    };
    for (int x = 0; x < size; ++x) {
      const double yc = center(x + 0.5);
      const double half = 0.5 * width * (1.0 + 0.3 * std::sin(kTwoPi * x / size + wphase));
      for (int y = 0; y < size; ++y) {
        if (std::abs(y + 0.5 - yc) < half) {
          auto [r, c] = cell(y, x);
          river.at(r, c) = 1;
          water.at(r, c) = 1;
        }
      }
    }
    // Flood lobes hug the river until the water target is met.
    const auto target = static_cast<std::size_t>(params.water_fraction * static_cast<double>(n));
    for (int i = 0; i < params.max_flood_lobes && count_set(water) < target; ++i) {
      const double x = size * uniform(rng, 0.1, 0.9);
      Ellipse e{center(x) + size * uniform(rng, -0.06, 0.06), x, size * uniform(rng, 0.05, 0.12),
                size * uniform(rng, 0.08, 0.2), uniform(rng, -0.5, 0.5)};
      lobes.push_back(e);
      const bool is_shallow = uniform01(rng) < params.shallow_fraction;
      for (int y = 0; y < size; ++y) {
        for (int xx = 0; xx < size; ++xx) {
          if (e.contains(y + 0.5, xx + 0.5)) {
            auto [r, c] = cell(y, xx);
            if (is_shallow && river.at(r, c) == 0 && water.at(r, c) == 0) shallow.at(r, c) = 1;
            water.at(r, c) = 1;
          }
        }
      }
    }
  }

  // Dark dry patches fool SAR but not the optical index.
  BinaryGrid dark(size, size);
  for (int i = 0; i < params.dark_patches; ++i) {
    Ellipse e{size * uniform(rng, 0.1, 0.9), size * uniform(rng, 0.1, 0.9), size * uniform(rng, 0.04, 0.1),
              size * uniform(rng, 0.04, 0.1), uniform(rng, 0.0, std::numbers::pi)};
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        if (water.at(r, c) == 0 && e.contains(r + 0.5, c + 0.5)) dark.at(r, c) = 1;
      }
    }
  }

  // Clouds and their shadows.
  BinaryGrid cloud(size, size);
  BinaryGrid shadow(size, size);
  if (params.cloud_cover > 0.0) {
    const auto target = static_cast<std::size_t>(params.cloud_cover * static_cast<double>(n));
    const int sy = static_cast<int>(std::lround(uniform(rng, -1.0, 1.0) * params.cloud_shadow_shift));
    const int sx = params.cloud_shadow_shift == 0 ? 0 : (uniform01(rng) < 0.5 ? -1 : 1) * params.cloud_shadow_shift;
    for (int i = 0; i < 24 && count_set(cloud) < target; ++i) {
      Ellipse e{size * uniform01(rng), size * uniform01(rng), size * uniform(rng, 0.06, 0.2),
                size * uniform(rng, 0.06, 0.2), uniform(rng, 0.0, std::numbers::pi)};
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          if (e.contains(r + 0.5, c + 0.5)) cloud.at(r, c) = 1;
        }
      }
    }
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const int rr = r - sy;
        const int cc = c - sx;
        if (rr >= 0 && rr < size && cc >= 0 && cc < size && cloud.at(rr, cc) != 0 && cloud.at(r, c) == 0) {
          shadow.at(r, c) = 1;
        }
      }
    }
  }

  const Grid<float> terrain = terrain_field(rng, size);
  Rng noise(derive_seed(seed, "noise"));
  std::gamma_distribution<double> speckle(params.speckle_looks, 1.0 / params.speckle_looks);
  std::uniform_real_distribution<double> jitter(-60.0, 60.0);

  std::vector<float> vv(n), vh(n), b2(n), b3(n), b4(n), b8(n), occ(n);
  ClassMask truth(size, size);
  ClassMask cloud_mask(size, size);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = terrain[i];
    const bool is_water = water[i] != 0;
    truth[i] = is_water ? Code::Water : Code::Dry;
    cloud_mask[i] = cloud[i] != 0 ? Code::Cloud : Code::Dry;

    double vv_db;
    double vh_db;
    if (shallow[i] != 0) {
      vv_db = -16.0 + 0.8 * t;
      vh_db = -23.0 + 0.8 * t;
    } else if (is_water) {
      vv_db = -21.0 + 0.8 * t;
      vh_db = -28.0 + 0.8 * t;
    } else if (dark[i] != 0) {
      vv_db = -19.0 + 0.8 * t;
      vh_db = -27.0 + 0.8 * t;
    } else {
      vv_db = -9.0 + 3.0 * t;
      vh_db = -16.0 + 3.0 * t;
    }
    if (!params.noise_free) {
      vv_db += 10.0 * std::log10(speckle(noise));
      vh_db += 10.0 * std::log10(speckle(noise));
    }
    vv[i] = static_cast<float>(vv_db);
    vh[i] = static_cast<float>(vh_db);

    // Optical bands: vegetation has high NIR, water high green / low NIR.
    double s[4];
    if (cloud[i] != 0) {
      s[0] = 2800; s[1] = 2750; s[2] = 2800; s[3] = 2900;
    } else if (shadow[i] != 0) {
      s[0] = 250; s[1] = 220; s[2] = 200; s[3] = 150;
    } else if (shallow[i] != 0) {
      s[0] = 1100 + 60 * t; s[1] = 1300 + 60 * t; s[2] = 1400 + 60 * t; s[3] = 1500 + 60 * t;
    } else if (is_water) {
      s[0] = 800 + 60 * t; s[1] = 1000 + 80 * t; s[2] = 550 + 50 * t; s[3] = 300 + 40 * t;
    } else if (dark[i] != 0) {
      s[0] = 1300 + 80 * t; s[1] = 1500 + 80 * t; s[2] = 1700 + 80 * t; s[3] = 2100 + 80 * t;
    } else {
      s[0] = 550 + 100 * t; s[1] = 750 + 100 * t; s[2] = 650 + 150 * t; s[3] = 2400 + 300 * t;
    }
    if (!params.noise_free) {
      for (double& v : s) v += jitter(noise);
    }
    b2[i] = static_cast<float>(s[0]);
    b3[i] = static_cast<float>(s[1]);
    b4[i] = static_cast<float>(s[2]);
    b8[i] = static_cast<float>(s[3]);

    double o;
    if (river[i] != 0) {
      o = 0.7 + 0.3 * uniform01(noise);
    } else if (is_water) {
      o = 0.05 + 0.25 * uniform01(noise);
    } else {
      o = 0.05 * uniform01(noise);
    }
    occ[i] = static_cast<float>(o);
  }

  const float res = params.resolution_m;
  SceneBundle b;
  b.s1 = Raster(size, size, res, {{"VV", std::move(vv)}, {"VH", std::move(vh)}});
  b.s2 = Raster(size, size, res, {{"B2", std::move(b2)}, {"B3", std::move(b3)}, {"B4", std::move(b4)}, {"B8", std::move(b8)}});
  b.truth = std::move(truth);
  b.occurrence = OccurrenceMap(Raster(size, size, res, {{"occurrence", std::move(occ)}}));
  b.cloud = std::move(cloud_mask);
  b.permanent = std::move(river);
  b.seed = seed;
  return b;
}

}  // namespace floodseg
