#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pixprop/geometry.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

// Inclusive pixel rectangle.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(const PixelRect& o) const { return o.x0 >= x0 && o.x1 <= x1 && o.y0 >= y0 && o.y1 <= y1; }
  void extend(const PixelRect& o);

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Pixels whose unit square overlaps the box interior.
PixelRect pixel_span(const NormalizedBox& box, int width, int height);
// Continuous extent of an inclusive pixel rectangle.
NormalizedBox normalized_from_rect(const PixelRect& rect, int width, int height);

struct SuperpixelMap {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<std::int32_t> labels;        // row-major, values 0..count-1
  std::vector<std::int64_t> pixel_counts;  // per segment
  std::vector<PixelRect> rects;            // tight bounding rectangle per segment

  std::int32_t at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
};

// Builds the per-segment caches; throws if a label in 0..max is unused.
SuperpixelMap make_superpixel_map(int width, int height, std::vector<std::int32_t> labels);

struct SlicParams {
  int segments = 0;  // 0 selects one segment per 64 pixels
  double compactness = 10.0;
  int iterations = 10;
  // Colour distances are measured on channel values multiplied by this; 100
  // puts them on the scale of CIELAB lightness.
  double color_scale = 100.0;
};

int default_segment_count(int width, int height);

// SLIC: grid-seeded centres moved to the lowest-gradient pixel of their 3x3
// neighbourhood, local k-means in 2S x 2S windows with
// D = sqrt(d_color^2 + (d_xy / S)^2 m^2), then orphaned fragments are merged
// into their dominant neighbouring label so each segment is 4-connected.
SuperpixelMap slic(const Tensor& image, const SlicParams& params = {});

// Shrunk: bounding rectangle of the segments lying entirely inside the box
// (falls back to the initial box when there are none). Expanded: bounding
// rectangle of every segment with at least one pixel inside. Both keep the
// initial score and cell, with their variant tag set.
std::pair<Proposal, Proposal> refine(const Proposal& proposal, const SuperpixelMap& superpixels);

// 16-bit PGM dump of the label map.
void write_label_pgm(const std::filesystem::path& path, const SuperpixelMap& map);

// True when every segment is a single 4-connected component.
bool segments_connected(const SuperpixelMap& map);

}  // namespace pixprop
