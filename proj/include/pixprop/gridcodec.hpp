#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pixprop/geometry.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

// Relationship between an input image and the coarse prediction map.
// Cell (r, c) is centred on pixel coordinate ((c + 0.5) w / cols, (r + 0.5) h / rows).
struct GridGeometry {
  int image_width = 0;
  int image_height = 0;
  int cols = 0;
  int rows = 0;

  void validate() const;
  size_t cell_count() const { return static_cast<size_t>(rows) * cols; }
  // Integer pixel containing the centre of cell (r, c).
  int center_pixel_x(int c) const;
  int center_pixel_y(int r) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

// Normalized self-coordinates x_self / w and y_self / h at every cell centre.
struct CoordBasis {
  int rows = 0;
  int cols = 0;
  std::vector<double> x;  // per column
  std::vector<double> y;  // per row

  double x_at(int c) const { return x[c]; }
  double y_at(int r) const { return y[r]; }
};

CoordBasis make_coord_basis(const GridGeometry& geometry);

enum class GridMode { kOffsets, kAbsolute };

using Coords = std::array<double, 4>;

// Four values per cell in (x_min, y_min, x_max, y_max) order, either as
// absolute normalized coordinates or as offsets from the cell's own position.
struct PredictionGrid {
  GridGeometry geometry;
  GridMode mode = GridMode::kAbsolute;
  std::vector<Coords> cells;

  PredictionGrid() = default;
  PredictionGrid(const GridGeometry& g, GridMode m, Coords fill = {0, 0, 0, 0})
      : geometry(g), mode(m), cells(g.cell_count(), fill) {}

  Coords& at(int r, int c) { return cells[static_cast<size_t>(r) * geometry.cols + c]; }
  const Coords& at(int r, int c) const { return cells[static_cast<size_t>(r) * geometry.cols + c]; }
};

PredictionGrid offsets_to_absolute(const PredictionGrid& offsets, const CoordBasis& basis);
PredictionGrid absolute_to_offsets(const PredictionGrid& absolute, const CoordBasis& basis);

// Converts a 4-channel network output map into a grid, and back.
PredictionGrid grid_from_tensor(const Tensor& t, const GridGeometry& geometry, GridMode mode);
Tensor tensor_from_grid(const PredictionGrid& grid);

// Per-cell supervision derived from instance masks.
struct TargetBundle {
  PredictionGrid coord_targets;  // absolute; zero where background
  CellGrid<double> fg_mask;      // p*
  CellGrid<double> size_mask;    // z*; 0 wherever p* = 0
  CellGrid<double> sample_weights;
  CellGrid<std::int32_t> instance;  // instance id per cell, 0 = background

  CellGrid<double> large_mask() const;  // l* = p* z*
  CellGrid<double> small_mask() const;  // s* = p* (1 - z*)
};

// Area above which an instance counts as large: round(0.0076 w h), which is
// 2,000 px at 513 x 513.
std::int64_t default_area_threshold(int image_width, int image_height);

inline constexpr int kDefaultBalanceSamples = 100;

// Labels each cell with the instance under its centre pixel. Instance id k
// (1-based) refers to boxes[k - 1] and areas[k - 1]. Large instances
// (area > area_threshold) covering more than balance_samples cells get weight
// 1 on a seeded random subset of exactly balance_samples cells.
TargetBundle targets_from_instances(const LabelImage& mask, std::span<const NormalizedBox> boxes,
                                    std::span<const std::int64_t> areas,
                                    const GridGeometry& geometry, std::int64_t area_threshold,
                                    std::uint64_t seed,
                                    int balance_samples = kDefaultBalanceSamples);

}  // namespace pixprop
