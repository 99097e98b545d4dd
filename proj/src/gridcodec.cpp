#include "pixprop/gridcodec.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pixprop/rng.hpp"

namespace pixprop {

void GridGeometry::validate() const {
  if (cols < 1 || rows < 1) throw std::invalid_argument("grid geometry: zero-sized grid");
  if (image_width < 1 || image_height < 1) throw std::invalid_argument("grid geometry: empty image");
  if (cols > image_width || rows > image_height)
    throw std::invalid_argument("grid geometry: grid larger than image");
}

int GridGeometry::center_pixel_x(int c) const {
  return static_cast<int>(((2LL * c + 1) * image_width) / (2LL * cols));
}

int GridGeometry::center_pixel_y(int r) const {
  return static_cast<int>(((2LL * r + 1) * image_height) / (2LL * rows));
}

CoordBasis make_coord_basis(const GridGeometry& geometry) {
  geometry.validate();
  CoordBasis basis;
  basis.rows = geometry.rows;
  basis.cols = geometry.cols;
  basis.x.resize(geometry.cols);
  basis.y.resize(geometry.rows);
  for (int c = 0; c < geometry.cols; ++c) basis.x[c] = (c + 0.5) / geometry.cols;
  for (int r = 0; r < geometry.rows; ++r) basis.y[r] = (r + 0.5) / geometry.rows;
  return basis;
}

namespace {

void check_basis(const PredictionGrid& grid, const CoordBasis& basis, GridMode expected) {
  if (grid.mode != expected) throw std::invalid_argument("prediction grid in unexpected mode");
  if (grid.geometry.rows != basis.rows || grid.geometry.cols != basis.cols ||
      grid.cells.size() != grid.geometry.cell_count())
    throw std::invalid_argument("prediction grid does not match coordinate basis geometry");
}

PredictionGrid shift(const PredictionGrid& in, const CoordBasis& basis, double sign, GridMode out_mode) {
  PredictionGrid out(in.geometry, out_mode);
  for (int r = 0; r < basis.rows; ++r) {
    const double ys = sign * basis.y[r];
    for (int c = 0; c < basis.cols; ++c) {
      const double xs = sign * basis.x[c];
      const Coords& v = in.at(r, c);
      out.at(r, c) = {v[0] + xs, v[1] + ys, v[2] + xs, v[3] + ys};
    }
  }
  return out;
}

}  // namespace

PredictionGrid offsets_to_absolute(const PredictionGrid& offsets, const CoordBasis& basis) {
  check_basis(offsets, basis, GridMode::kOffsets);
  return shift(offsets, basis, 1.0, GridMode::kAbsolute);
}

PredictionGrid absolute_to_offsets(const PredictionGrid& absolute, const CoordBasis& basis) {
  check_basis(absolute, basis, GridMode::kAbsolute);
  return shift(absolute, basis, -1.0, GridMode::kOffsets);
}

PredictionGrid grid_from_tensor(const Tensor& t, const GridGeometry& geometry, GridMode mode) {
  if (t.channels != 4 || t.height != geometry.rows || t.width != geometry.cols)
    throw std::invalid_argument("tensor shape does not match a 4-channel prediction grid");
  PredictionGrid grid(geometry, mode);
  for (int r = 0; r < geometry.rows; ++r)
    for (int c = 0; c < geometry.cols; ++c)
      grid.at(r, c) = {t.at(0, r, c), t.at(1, r, c), t.at(2, r, c), t.at(3, r, c)};
  return grid;
}

Tensor tensor_from_grid(const PredictionGrid& grid) {
  Tensor t(4, grid.geometry.rows, grid.geometry.cols);
  for (int r = 0; r < grid.geometry.rows; ++r)
    for (int c = 0; c < grid.geometry.cols; ++c)
      for (int k = 0; k < 4; ++k) t.at(k, r, c) = grid.at(r, c)[k];
  return t;
}

CellGrid<double> TargetBundle::large_mask() const {
  CellGrid<double> m(fg_mask.rows, fg_mask.cols);
  for (size_t i = 0; i < m.size(); ++i) m[i] = fg_mask[i] * size_mask[i];
  return m;
}

CellGrid<double> TargetBundle::small_mask() const {
  CellGrid<double> m(fg_mask.rows, fg_mask.cols);
  for (size_t i = 0; i < m.size(); ++i) m[i] = fg_mask[i] * (1.0 - size_mask[i]);
  return m;
}

std::int64_t default_area_threshold(int image_width, int image_height) {
  return std::llround(0.0076 * static_cast<double>(image_width) * image_height);
}

TargetBundle targets_from_instances(const LabelImage& mask, std::span<const NormalizedBox> boxes,
                                    std::span<const std::int64_t> areas,
                                    const GridGeometry& geometry, std::int64_t area_threshold,
                                    std::uint64_t seed, int balance_samples) {
  geometry.validate();
  if (mask.width != geometry.image_width || mask.height != geometry.image_height)
    throw std::invalid_argument("instance mask size differs from grid geometry image size");
  if (boxes.size() != areas.size())
    throw std::invalid_argument("instance boxes and areas differ in length");

  const int rows = geometry.rows;
  const int cols = geometry.cols;
  TargetBundle t;
  t.coord_targets = PredictionGrid(geometry, GridMode::kAbsolute);
  t.fg_mask = CellGrid<double>(rows, cols);
  t.size_mask = CellGrid<double>(rows, cols);
  t.sample_weights = CellGrid<double>(rows, cols);
  t.instance = CellGrid<std::int32_t>(rows, cols);

  std::vector<std::vector<size_t>> cells_of(boxes.size() + 1);
  for (int r = 0; r < rows; ++r) {
    const int py = geometry.center_pixel_y(r);
    for (int c = 0; c < cols; ++c) {
      const int px = geometry.center_pixel_x(c);
      const std::int32_t id = mask.at(px, py);
      if (id == 0) continue;
      if (id < 0 || static_cast<size_t>(id) > boxes.size())
        throw std::invalid_argument("instance id " + std::to_string(id) + " has no box");
      const size_t k = static_cast<size_t>(id) - 1;
      const NormalizedBox& b = boxes[k];
      t.coord_targets.at(r, c) = {b.x_min, b.y_min, b.x_max, b.y_max};
      t.fg_mask.at(r, c) = 1.0;
      t.size_mask.at(r, c) = areas[k] > area_threshold ? 1.0 : 0.0;
      t.sample_weights.at(r, c) = 1.0;
      t.instance.at(r, c) = id;
      cells_of[id].push_back(static_cast<size_t>(r) * cols + c);
    }
  }

  // Balance the size branch: large instances keep only a random subset.
  for (size_t id = 1; id < cells_of.size(); ++id) {
    std::vector<size_t>& cells = cells_of[id];
    if (areas[id - 1] <= area_threshold) continue;
    if (balance_samples < 0 || cells.size() <= static_cast<size_t>(balance_samples)) continue;
    CounterRng rng(CounterRng::derive(seed, id));
    for (size_t i = 0; i < static_cast<size_t>(balance_samples); ++i) {
      const size_t j = i + rng.below(cells.size() - i);
      std::swap(cells[i], cells[j]);
    }
    for (size_t i = balance_samples; i < cells.size(); ++i) t.sample_weights[cells[i]] = 0.0;
  }
  return t;
}

}  // namespace pixprop
