#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pixprop/geometry.hpp"
#include "pixprop/manifest.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

enum class ShapeKind { kRectangle, kEllipse };

using Color = std::array<double, 3>;

// An object to paint: a shape inscribed in the pixel rectangle
// [x, x + width) x [y, y + height).
struct ObjectSpec {
  ShapeKind shape = ShapeKind::kRectangle;
  int x = 0;
  int y = 0;
  int width = 1;
  int height = 1;
  Color color{1.0, 1.0, 1.0};
};

struct SyntheticScene {
  int id = 0;
  std::uint64_t seed = 0;
  Tensor image;      // 3 x H x W, 8-bit quantized values in [0, 1]
  LabelImage mask;   // instance ids, 0 = background
  std::vector<NormalizedBox> boxes;  // boxes[k] belongs to id k + 1
  std::vector<std::int64_t> areas;   // pixel counts per instance
  int skipped = 0;   // objects dropped after failed placement

  int width() const { return image.width; }
  int height() const { return image.height; }
};

struct DatasetConfig {
  int width = 64;
  int height = 64;
  int scene_count = 1000;
  int objects_min = 1;
  int objects_max = 4;
  std::vector<ShapeKind> shapes{ShapeKind::kRectangle, ShapeKind::kEllipse};
  // Object areas are log-uniform in [area_min, area_max] pixels.
  double area_min = 2.5;
  double area_max = 250.0;
  double aspect_max = 2.0;    // width / height in [1 / aspect_max, aspect_max]
  double noise = 0.03;        // per-pixel Gaussian standard deviation
  double color_margin = 0.35; // min RGB distance between object and background
  double max_overlap = 0.0;   // allowed shared-pixel fraction between objects
  int max_retries = 200;
  std::uint64_t seed = 1;

  void validate() const;
  std::string describe() const;
};

// Paints objects over a flat background, adds noise, quantizes to 8 bits and
// derives boxes and areas from the resulting mask.
SyntheticScene render_scene(int width, int height, const Color& background,
                            std::span<const ObjectSpec> objects, double noise, std::uint64_t seed);

std::vector<SyntheticScene> generate(const DatasetConfig& config, int workers = 1);

// Recomputes boxes and areas from the mask; throws DataError on any
// inconsistency with the stored values.
void check_scene_consistency(const SyntheticScene& scene);

// Per-bin object counts and pixel counts over [edges[i], edges[i + 1]).
struct AreaHistogram {
  std::vector<double> edges;
  std::vector<std::int64_t> object_counts;
  std::vector<std::int64_t> pixel_counts;
};

AreaHistogram area_histogram(std::span<const SyntheticScene> scenes, std::span<const double> edges);

// Binary PPM (P6, 8-bit) and 16-bit big-endian PGM (P5).
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_pgm16(const std::filesystem::path& path);

// Layout: images/<id>.ppm, masks/<id>.pgm, scenes.csv, boxes.csv
// ("scene_id,instance_id,x_min,y_min,x_max,y_max,area") and manifest.txt.
Manifest save_dataset(const std::filesystem::path& dir, std::span<const SyntheticScene> scenes,
                      const std::string& description);
std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir);
// Re-hashes every file listed in the dataset manifest.
void verify_dataset(const std::filesystem::path& dir);

std::string scene_name(int id);

}  // namespace pixprop
