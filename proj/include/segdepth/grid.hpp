#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace segdepth {

struct Shape2 {
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool operator==(const Shape2&) const = default;
};

// Dense row-major 2D raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  explicit Grid(Shape2 shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {
    if (shape.rows < 0 || shape.cols < 0) throw std::invalid_argument("Grid: negative shape");
  }
  Grid(Shape2 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape.size()) throw std::invalid_argument("Grid: data size does not match shape");
  }

  Shape2 shape() const { return shape_; }
  int rows() const { return shape_.rows; }
  int cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const { return data_[index(r, c)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < shape_.rows && c < shape_.cols; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_.cols) + static_cast<std::size_t>(c);
  }

  Shape2 shape_{};
  std::vector<T> data_;
};

}  // namespace segdepth
