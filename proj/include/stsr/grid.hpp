#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stsr {

// Thrown whenever an input violates a documented precondition.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major 2-D array. Used for masks, probability maps and label
// rasters, where a full tensor would be overkill.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::int64_t height, std::int64_t width, T fill = T{})
      : height_(height), width_(width) {
    if (height < 0 || width < 0) {
      throw ValidationError("Grid2D dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(height * width), fill);
  }

  std::int64_t height() const { return height_; }
  std::int64_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::int64_t row, std::int64_t col) {
    return data_[static_cast<std::size_t>(row * width_ + col)];
  }
  const T& operator()(std::int64_t row, std::int64_t col) const {
    return data_[static_cast<std::size_t>(row * width_ + col)];
  }

  bool contains(std::int64_t row, std::int64_t col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool same_shape(const Grid2D& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::int64_t height_ = 0;
  std::int64_t width_ = 0;
  std::vector<T> data_;
};

using Mask = Grid2D<std::uint8_t>;
using ProbabilityMap = Grid2D<float>;

template <typename A, typename B>
void require_same_shape(const Grid2D<A>& a, const Grid2D<B>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ValidationError(std::string(what) + ": dimension mismatch (" +
                          std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                          " vs " + std::to_string(b.height()) + "x" +
                          std::to_string(b.width()) + ")");
  }
}

}  // namespace stsr
