#include "pixprop/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "pixprop/errors.hpp"
#include "pixprop/hashing.hpp"
#include "pixprop/parallel.hpp"
#include "pixprop/rng.hpp"

namespace fs = std::filesystem;

namespace pixprop {
namespace {

bool shape_covers(const ObjectSpec& o, int px, int py) {
  if (px < o.x || px >= o.x + o.width || py < o.y || py >= o.y + o.height) return false;
  if (o.shape == ShapeKind::kRectangle) return true;
  const double rx = 0.5 * o.width;
  const double ry = 0.5 * o.height;
  const double dx = (px + 0.5 - (o.x + rx)) / rx;
  const double dy = (py + 0.5 - (o.y + ry)) / ry;
  return dx * dx + dy * dy <= 1.0;
}

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double color_distance(const Color& a, const Color& b) {
  const double d0 = a[0] - b[0];
  const double d1 = a[1] - b[1];
  const double d2 = a[2] - b[2];
  return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

// Tight normalized box and pixel count of every instance present in `mask`.
void derive_instances(const LabelImage& mask, int count, std::vector<NormalizedBox>& boxes,
                      std::vector<std::int64_t>& areas) {
  std::vector<int> x0(count + 1, mask.width), y0(count + 1, mask.height), x1(count + 1, -1), y1(count + 1, -1);
  areas.assign(count, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int id = mask.at(x, y);
      if (id == 0) continue;
      if (id < 0 || id > count) throw DataError("instance id out of range in mask");
      ++areas[id - 1];
      x0[id] = std::min(x0[id], x);
      y0[id] = std::min(y0[id], y);
      x1[id] = std::max(x1[id], x);
      y1[id] = std::max(y1[id], y);
    }
  }
  boxes.assign(count, NormalizedBox{});
  for (int id = 1; id <= count; ++id) {
    if (areas[id - 1] == 0) continue;
    boxes[id - 1] = {static_cast<double>(x0[id]) / mask.width, static_cast<double>(y0[id]) / mask.height,
                     static_cast<double>(x1[id] + 1) / mask.width,
                     static_cast<double>(y1[id] + 1) / mask.height};
  }
}

SyntheticScene generate_scene(const DatasetConfig& cfg, int index) {
  const std::uint64_t scene_seed = CounterRng::derive(cfg.seed, static_cast<std::uint64_t>(index));
  CounterRng rng(scene_seed);
  Color background{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  const int n = cfg.objects_min + static_cast<int>(rng.below(cfg.objects_max - cfg.objects_min + 1));

  LabelImage occupancy(cfg.width, cfg.height);
  std::vector<ObjectSpec> placed;
  std::vector<std::int64_t> placed_area;
  int skipped = 0;
  const double log_lo = std::log(cfg.area_min);
  const double log_hi = std::log(cfg.area_max);
  const double log_aspect = std::log(cfg.aspect_max);
  for (int k = 0; k < n; ++k) {
    ObjectSpec o;
    o.shape = cfg.shapes[rng.below(cfg.shapes.size())];
    const double area = std::exp(rng.uniform(log_lo, log_hi));
    const double aspect = std::exp(rng.uniform(-log_aspect, log_aspect));
    const double frame = o.shape == ShapeKind::kEllipse ? area * 4.0 / std::numbers::pi : area;
    o.width = std::clamp(static_cast<int>(std::lround(std::sqrt(frame * aspect))), 1, cfg.width);
    o.height = std::clamp(static_cast<int>(std::lround(std::sqrt(frame / aspect))), 1, cfg.height);
    Color best{};
    double best_d = -1.0;
    for (int t = 0; t < 64; ++t) {
      Color c{rng.uniform(), rng.uniform(), rng.uniform()};
      const double d = color_distance(c, background);
      if (d > best_d) {
        best = c;
        best_d = d;
      }
      if (d >= cfg.color_margin) break;
    }
    o.color = best;

    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_retries && !ok; ++attempt) {
      o.x = static_cast<int>(rng.below(cfg.width - o.width + 1));
      o.y = static_cast<int>(rng.below(cfg.height - o.height + 1));
      std::int64_t own = 0;
      std::map<int, std::int64_t> shared;
      for (int y = o.y; y < o.y + o.height; ++y) {
        for (int x = o.x; x < o.x + o.width; ++x) {
          if (!shape_covers(o, x, y)) continue;
          ++own;
          if (const int id = occupancy.at(x, y); id != 0) ++shared[id];
        }
      }
      ok = own > 0;
      for (const auto& [id, count] : shared) {
        const double frac = static_cast<double>(count) / std::min(own, placed_area[id - 1]);
        if (frac > cfg.max_overlap) ok = false;
      }
      if (ok) {
        placed.push_back(o);
        placed_area.push_back(own);
        const int id = static_cast<int>(placed.size());
        for (int y = o.y; y < o.y + o.height; ++y)
          for (int x = o.x; x < o.x + o.width; ++x)
            if (shape_covers(o, x, y)) occupancy.at(x, y) = id;
      }
    }
    if (!ok) ++skipped;
  }

  SyntheticScene scene =
      render_scene(cfg.width, cfg.height, background, placed, cfg.noise, CounterRng::derive(scene_seed, 0x1015e));
  scene.id = index;
  scene.seed = scene_seed;
  scene.skipped = skipped;
  return scene;
}

void expect_token(std::istream& in, std::string& tok) {
  while (in >> tok) {
    if (!tok.empty() && tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return;
  }
  throw DataError("truncated image header");
}

struct PnmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& magic, const fs::path& path) {
  std::string tok;
  expect_token(in, tok);
  if (tok != magic) throw DataError(path.string() + ": expected " + magic);
  PnmHeader h;
  expect_token(in, tok);
  h.width = std::stoi(tok);
  expect_token(in, tok);
  h.height = std::stoi(tok);
  expect_token(in, tok);
  h.maxval = std::stoi(tok);
  in.get();  // single whitespace before raster
  if (h.width <= 0 || h.height <= 0) throw DataError(path.string() + ": bad dimensions");
  return h;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void DatasetConfig::validate() const {
  if (width < 8 || height < 8) throw ConfigError("dataset: image must be at least 8x8");
  if (scene_count < 0) throw ConfigError("dataset: negative scene count");
  if (objects_min < 0 || objects_max < objects_min) throw ConfigError("dataset: bad objects-per-scene range");
  if (shapes.empty()) throw ConfigError("dataset: empty shape set");
  if (!(area_min >= 1.0) || !(area_max >= area_min)) throw ConfigError("dataset: bad area range");
  if (area_max > 0.5 * width * height) throw ConfigError("dataset: image too small for the largest object");
  if (!(aspect_max >= 1.0)) throw ConfigError("dataset: aspect_max must be >= 1");
  if (noise < 0.0 || color_margin < 0.0 || max_overlap < 0.0 || max_overlap > 1.0)
    throw ConfigError("dataset: bad noise, margin or overlap");
  if (max_retries < 1) throw ConfigError("dataset: max_retries must be positive");
}

std::string DatasetConfig::describe() const {
  std::ostringstream s;
  s << "size=" << width << "x" << height << ";scenes=" << scene_count << ";objects=" << objects_min << "-"
    << objects_max << ";shapes=";
  for (ShapeKind k : shapes) s << (k == ShapeKind::kRectangle ? "rectangle," : "ellipse,");
  s << ";area=" << format_double(area_min) << "-" << format_double(area_max)
    << ";aspect_max=" << format_double(aspect_max) << ";noise=" << format_double(noise)
    << ";color_margin=" << format_double(color_margin) << ";max_overlap=" << format_double(max_overlap)
    << ";max_retries=" << max_retries << ";seed=" << seed << ";rng=" << kRngAlgorithm;
  return s.str();
}

SyntheticScene render_scene(int width, int height, const Color& background,
                            std::span<const ObjectSpec> objects, double noise, std::uint64_t seed) {
  if (width < 1 || height < 1) throw std::invalid_argument("render_scene: empty image");
  SyntheticScene scene;
  scene.seed = seed;
  scene.image = Tensor(3, height, width);
  for (int c = 0; c < 3; ++c) std::fill_n(scene.image.channel(c).begin(), scene.image.plane(), background[c]);
  LabelImage painted(width, height);
  for (size_t k = 0; k < objects.size(); ++k) {
    const ObjectSpec& o = objects[k];
    for (int y = std::max(0, o.y); y < std::min(height, o.y + o.height); ++y) {
      for (int x = std::max(0, o.x); x < std::min(width, o.x + o.width); ++x) {
        if (!shape_covers(o, x, y)) continue;
        painted.at(x, y) = static_cast<int>(k) + 1;
        for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = o.color[c];
      }
    }
  }
  CounterRng rng(seed);
  for (double& v : scene.image.data) v = quantize8(v + noise * rng.gaussian());

  // Drop fully occluded instances and renumber the rest densely.
  std::vector<NormalizedBox> boxes;
  std::vector<std::int64_t> areas;
  derive_instances(painted, static_cast<int>(objects.size()), boxes, areas);
  std::vector<int> remap(objects.size() + 1, 0);
  int next = 0;
  for (size_t k = 0; k < objects.size(); ++k) {
    if (areas[k] == 0) continue;
    remap[k + 1] = ++next;
    scene.boxes.push_back(boxes[k]);
    scene.areas.push_back(areas[k]);
  }
  scene.mask = LabelImage(width, height);
  for (size_t i = 0; i < painted.labels.size(); ++i) scene.mask.labels[i] = remap[painted.labels[i]];
  return scene;
}

std::vector<SyntheticScene> generate(const DatasetConfig& config, int workers) {
  config.validate();
  std::vector<SyntheticScene> scenes(config.scene_count);
  parallel_for(scenes.size(), workers, [&](size_t i) { scenes[i] = generate_scene(config, static_cast<int>(i)); });
  return scenes;
}

void check_scene_consistency(const SyntheticScene& scene) {
  std::vector<NormalizedBox> boxes;
  std::vector<std::int64_t> areas;
  derive_instances(scene.mask, static_cast<int>(scene.boxes.size()), boxes, areas);
  if (areas != scene.areas) throw DataError("scene " + std::to_string(scene.id) + ": areas disagree with mask");
  if (boxes != scene.boxes) throw DataError("scene " + std::to_string(scene.id) + ": boxes disagree with mask");
  for (std::int64_t a : areas)
    if (a == 0) throw DataError("scene " + std::to_string(scene.id) + ": instance without pixels");
}

AreaHistogram area_histogram(std::span<const SyntheticScene> scenes, std::span<const double> edges) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
    throw std::invalid_argument("area_histogram: need at least two ascending edges");
  AreaHistogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.object_counts.assign(edges.size() - 1, 0);
  h.pixel_counts.assign(edges.size() - 1, 0);
  for (const SyntheticScene& s : scenes) {
    for (std::int64_t a : s.areas) {
      const auto it = std::upper_bound(edges.begin(), edges.end(), static_cast<double>(a));
      if (it == edges.begin() || it == edges.end()) continue;
      const size_t bin = static_cast<size_t>(it - edges.begin()) - 1;
      ++h.object_counts[bin];
      h.pixel_counts[bin] += a;
    }
  }
  return h;
}

void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.channels != 3) throw std::invalid_argument("write_ppm: need a 3-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::string raster(static_cast<size_t>(image.width) * image.height * 3, '\0');
  size_t i = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        raster[i++] = static_cast<char>(std::lround(std::clamp(image.at(c, y, x), 0.0, 1.0) * 255.0));
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const PnmHeader h = read_pnm_header(in, "P6", path);
  if (h.maxval != 255) throw DataError(path.string() + ": only 8-bit PPM is supported");
  std::string raster(static_cast<size_t>(h.width) * h.height * 3, '\0');
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!in) throw DataError(path.string() + ": truncated raster");
  Tensor image(3, h.height, h.width);
  size_t i = 0;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = static_cast<unsigned char>(raster[i++]) / 255.0;
  return image;
}

void write_pgm16(const fs::path& path, const LabelImage& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << labels.width << " " << labels.height << "\n65535\n";
  std::string raster(labels.labels.size() * 2, '\0');
  for (size_t i = 0; i < labels.labels.size(); ++i) {
    const std::int32_t v = labels.labels[i];
    if (v < 0 || v > 65535) throw std::invalid_argument("write_pgm16: label out of 16-bit range");
    raster[2 * i] = static_cast<char>((v >> 8) & 0xff);
    raster[2 * i + 1] = static_cast<char>(v & 0xff);
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

LabelImage read_pgm16(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const PnmHeader h = read_pnm_header(in, "P5", path);
  if (h.maxval != 65535) throw DataError(path.string() + ": expected a 16-bit PGM");
  std::string raster(static_cast<size_t>(h.width) * h.height * 2, '\0');
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!in) throw DataError(path.string() + ": truncated raster");
  LabelImage labels(h.width, h.height);
  for (size_t i = 0; i < labels.labels.size(); ++i) {
    labels.labels[i] = (static_cast<unsigned char>(raster[2 * i]) << 8) |
                       static_cast<unsigned char>(raster[2 * i + 1]);
  }
  return labels;
}

std::string scene_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

Manifest save_dataset(const fs::path& dir, std::span<const SyntheticScene> scenes,
                      const std::string& description) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string());

  Manifest m;
  m.set("kind", "dataset");
  m.set("tool", kToolVersion);
  m.set("config", description);
  m.set("rng", kRngAlgorithm);
  m.set("scenes", std::to_string(scenes.size()));

  std::ofstream sc(dir / "scenes.csv", std::ios::binary);
  std::ofstream bx(dir / "boxes.csv", std::ios::binary);
  if (!sc || !bx) throw IoError("cannot write dataset tables in " + dir.string());
  sc << "scene_id,seed,width,height,skipped\n";
  bx << "scene_id,instance_id,x_min,y_min,x_max,y_max,area\n";
  std::int64_t instances = 0;
  std::int64_t skipped = 0;
  for (const SyntheticScene& s : scenes) {
    const std::string name = scene_name(s.id);
    write_ppm(dir / "images" / (name + ".ppm"), s.image);
    write_pgm16(dir / "masks" / (name + ".pgm"), s.mask);
    sc << s.id << "," << s.seed << "," << s.width() << "," << s.height() << "," << s.skipped << "\n";
    for (size_t k = 0; k < s.boxes.size(); ++k) {
      const NormalizedBox& b = s.boxes[k];
      bx << s.id << "," << (k + 1) << "," << format_double(b.x_min) << "," << format_double(b.y_min) << ","
         << format_double(b.x_max) << "," << format_double(b.y_max) << "," << s.areas[k] << "\n";
    }
    instances += static_cast<std::int64_t>(s.boxes.size());
    skipped += s.skipped;
  }
  sc.close();
  bx.close();
  m.set("instances", std::to_string(instances));
  m.set("skipped_objects", std::to_string(skipped));
  record_file_hash(m, "scenes.csv", dir / "scenes.csv");
  record_file_hash(m, "boxes.csv", dir / "boxes.csv");
  // Combined digest over every raster keeps the manifest short.
  std::string raster_hashes;
  for (const SyntheticScene& s : scenes) {
    const std::string name = scene_name(s.id);
    raster_hashes += sha256_file(dir / "images" / (name + ".ppm"));
    raster_hashes += sha256_file(dir / "masks" / (name + ".pgm"));
  }
  m.set("hash.rasters", sha256_hex(raster_hashes));
  m.write(dir / "manifest.txt");
  return m;
}

std::vector<SyntheticScene> load_dataset(const fs::path& dir) {
  std::ifstream sc(dir / "scenes.csv", std::ios::binary);
  std::ifstream bx(dir / "boxes.csv", std::ios::binary);
  if (!sc || !bx) throw DataError("dataset tables missing in " + dir.string());
  std::string line;
  std::getline(sc, line);
  if (line != "scene_id,seed,width,height,skipped") throw DataError("scenes.csv: bad header");
  std::vector<SyntheticScene> scenes;
  std::map<int, size_t> index;
  while (std::getline(sc, line)) {
    if (line.empty()) continue;
    SyntheticScene s;
    char comma = 0;
    int w = 0;
    int h = 0;
    std::istringstream ls(line);
    ls >> s.id >> comma >> s.seed >> comma >> w >> comma >> h >> comma >> s.skipped;
    if (!ls) throw DataError("scenes.csv: malformed row '" + line + "'");
    const std::string name = scene_name(s.id);
    s.image = read_ppm(dir / "images" / (name + ".ppm"));
    s.mask = read_pgm16(dir / "masks" / (name + ".pgm"));
    if (s.image.width != w || s.image.height != h || s.mask.width != w || s.mask.height != h)
      throw DataError("scene " + name + ": raster size disagrees with scenes.csv");
    index[s.id] = scenes.size();
    scenes.push_back(std::move(s));
  }
  std::getline(bx, line);
  if (line != "scene_id,instance_id,x_min,y_min,x_max,y_max,area") throw DataError("boxes.csv: bad header");
  while (std::getline(bx, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 7) throw DataError("boxes.csv: malformed row '" + line + "'");
    const int id = std::stoi(f[0]);
    const auto it = index.find(id);
    if (it == index.end()) throw DataError("boxes.csv: unknown scene " + f[0]);
    SyntheticScene& s = scenes[it->second];
    if (std::stoul(f[1]) != s.boxes.size() + 1) throw DataError("boxes.csv: instances out of order");
    s.boxes.push_back({std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    s.areas.push_back(std::stoll(f[6]));
  }
  for (const SyntheticScene& s : scenes) check_scene_consistency(s);
  return scenes;
}

void verify_dataset(const fs::path& dir) {
  const Manifest m = Manifest::read(dir / "manifest.txt");
  verify_file_hash(m, "scenes.csv", dir / "scenes.csv");
  verify_file_hash(m, "boxes.csv", dir / "boxes.csv");
  std::ifstream sc(dir / "scenes.csv", std::ios::binary);
  std::string line;
  std::getline(sc, line);
  std::string raster_hashes;
  while (std::getline(sc, line)) {
    if (line.empty()) continue;
    const std::string name = scene_name(std::stoi(line.substr(0, line.find(','))));
    for (const fs::path& p : {dir / "images" / (name + ".ppm"), dir / "masks" / (name + ".pgm")}) {
      if (!fs::exists(p)) throw DataError("missing artifact " + p.string());
      raster_hashes += sha256_file(p);
    }
  }
  if (sha256_hex(raster_hashes) != m.require("hash.rasters"))
    throw DataError("stale artifact " + (dir / "images").string() + ": rasters differ from the dataset manifest");
}

}  // namespace pixprop
