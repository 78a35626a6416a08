#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "floodseg/grid.hpp"
#include "floodseg/raster.hpp"
#include "floodseg/tensor.hpp"

namespace fixture {

using floodseg::ClassMask;
using floodseg::Code;

// Mask with blobs of water so that morphology sees real edges; a share of
// pixels is CLOUD or INVALID.
inline ClassMask random_mask(std::mt19937_64& rng, int w, int h, double ignore_share = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ClassMask m(w, h, Code::Dry);
  const int blobs = 1 + static_cast<int>(u(rng) * 6);
  for (int b = 0; b < blobs; ++b) {
    const double cy = u(rng) * h, cx = u(rng) * w, rad = 1 + u(rng) * w / 4.0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if ((r - cy) * (r - cy) + (c - cx) * (c - cx) < rad * rad) m.at(r, c) = Code::Water;
      }
    }
  }
  for (auto& v : m.cells()) {
    const double x = u(rng);
    if (x < 0.05) v = v == Code::Water ? Code::Dry : Code::Water;
    else if (x < 0.05 + ignore_share / 2) v = Code::Cloud;
    else if (x < 0.05 + ignore_share) v = Code::Invalid;
  }
  return m;
}

inline floodseg::BinaryGrid random_binary(std::mt19937_64& rng, int w, int h, double p) {
  std::bernoulli_distribution b(p);
  floodseg::BinaryGrid g(w, h);
  for (auto& v : g.cells()) v = b(rng) ? 1 : 0;
  return g;
}

inline floodseg::Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w, float lo = -1.0F,
                                      float hi = 1.0F) {
  std::uniform_real_distribution<float> u(lo, hi);
  floodseg::Tensor t(c, h, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}

inline floodseg::Raster raster_of(int w, int h, std::vector<std::pair<std::string, std::vector<float>>> bands,
                                  float res = 16.0F) {
  std::vector<floodseg::Band> out;
  for (auto& [name, data] : bands) out.push_back({name, std::move(data)});
  return {w, h, res, std::move(out)};
}

inline std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("floodseg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Lexicographically sorted relative paths and contents of every file below root.
inline std::vector<std::pair<std::string, std::vector<unsigned char>>> tree(const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::vector<unsigned char>>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(e.path().lexically_relative(root).generic_string(), file_bytes(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fixture
