#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pixprop {

// Dense channel-major (C, H, W) array of doubles. Images are 3-channel
// tensors with values in [0, 1].
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0);

  size_t size() const { return data.size(); }
  size_t plane() const { return static_cast<size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  std::span<double> channel(int c) { return {data.data() + c * plane(), plane()}; }
  std::span<const double> channel(int c) const { return {data.data() + c * plane(), plane()}; }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Row-major per-cell grid over a prediction map.
template <typename T>
struct CellGrid {
  int rows = 0;
  int cols = 0;
  std::vector<T> values;

  CellGrid() = default;
  CellGrid(int r, int c, T fill = T{}) : rows(r), cols(c), values(static_cast<size_t>(r) * c, fill) {}

  size_t size() const { return values.size(); }
  T& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
  T& operator[](size_t i) { return values[i]; }
  const T& operator[](size_t i) const { return values[i]; }
  bool same_shape(int r, int c) const { return rows == r && cols == c; }

  friend bool operator==(const CellGrid&, const CellGrid&) = default;
};

// Per-pixel integer labels, row-major.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;

  LabelImage() = default;
  LabelImage(int w, int h, std::int32_t fill = 0)
      : width(w), height(h), labels(static_cast<size_t>(w) * h, fill) {}

  std::int32_t& at(int x, int y) { return labels[static_cast<size_t>(y) * width + x]; }
  std::int32_t at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }

  friend bool operator==(const LabelImage&, const LabelImage&) = default;
};

}  // namespace pixprop
