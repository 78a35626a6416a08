#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "floodseg/errors.hpp"

namespace floodseg {

// Row-major height x width grid of cells.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw SchemaError("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
    cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Grid(int width, int height, std::vector<T> cells) : Grid(width, height) {
    if (cells.size() != cells_.size()) {
      throw SchemaError("grid payload has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(cells_.size()));
    }
    cells_ = std::move(cells);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }

  T& at(int row, int col) { return cells_[index(row, col)]; }
  const T& at(int row, int col) const { return cells_[index(row, col)]; }
  T& operator[](std::size_t i) { return cells_[i]; }
  const T& operator[](std::size_t i) const { return cells_[i]; }

  std::span<T> cells() noexcept { return cells_; }
  std::span<const T> cells() const noexcept { return cells_; }

  bool same_shape(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return same_shape(other.width(), other.height());
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> cells_;
};

enum class Code : std::uint8_t { Dry = 0, Water = 1, Cloud = 2, Invalid = 3 };

inline bool is_ignored(Code c) noexcept { return c == Code::Cloud || c == Code::Invalid; }

using ClassMask = Grid<Code>;
using BinaryGrid = Grid<std::uint8_t>;
using WeightMap = Grid<float>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw SchemaError(std::string(what) + ": shape mismatch " + std::to_string(a.width()) + "x" +
                      std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                      std::to_string(b.height()));
  }
}

}  // namespace floodseg
