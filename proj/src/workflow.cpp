#include "pixprop/workflow.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "pixprop/errors.hpp"
#include "pixprop/hashing.hpp"
#include "pixprop/parallel.hpp"
#include "pixprop/rng.hpp"

namespace pixprop {

namespace fs = std::filesystem;

namespace layout {
fs::path data(const RunConfig& c, const std::string& split) { return fs::path(c.output_dir) / "data" / split; }
fs::path models(const RunConfig& c) { return fs::path(c.output_dir) / "models"; }
fs::path proposals(const RunConfig& c) { return fs::path(c.output_dir) / "proposals"; }
fs::path eval(const RunConfig& c) { return fs::path(c.output_dir) / "eval"; }
fs::path ablation(const RunConfig& c) { return fs::path(c.output_dir) / "ablation"; }
}  // namespace layout

namespace {

constexpr std::uint64_t kTargetStream = 3;
constexpr std::uint64_t kTrainStream = 4;
const char* const kSplits[] = {"train", "test"};

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

Manifest start_manifest(const std::string& kind, const RunConfig& config) {
  Manifest m;
  m.set("kind", kind);
  m.set("tool", kToolVersion);
  m.set("seed", std::to_string(config.seed));
  m.set("config.sha256", config.hash());
  return m;
}

Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing artifact " + path.string() + " (run the upstream command first)");
  return Manifest::read(path);
}

// Checks every "hash.<name>" entry of a stage manifest against <dir>/<name>.
void verify_stage(const fs::path& dir) {
  const Manifest m = read_manifest(dir / "manifest.txt");
  for (const auto& [key, value] : m.entries()) {
    if (key.rfind("hash.", 0) != 0) continue;
    verify_file_hash(m, key.substr(5), dir / key.substr(5));
  }
}

std::string sha256_file_or_throw(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing artifact " + path.string());
  return sha256_file(path);
}

// Records the upstream manifest so the chain can be walked back.
void link_input(Manifest& m, const std::string& name, const fs::path& manifest_path) {
  m.set("input." + name, sha256_file_or_throw(manifest_path));
}

}  // namespace

std::vector<TrainingSample> make_samples(std::span<const SyntheticScene> scenes, const RunConfig& config,
                                         const NetworkSpec& spec) {
  std::vector<TrainingSample> out(scenes.size());
  const std::int64_t threshold = config.effective_area_threshold();
  parallel_for(scenes.size(), config.workers, [&](size_t i) {
    const SyntheticScene& s = scenes[i];
    GridGeometry g{s.width(), s.height(), spec.output_extent(s.width()), spec.output_extent(s.height())};
    const std::uint64_t seed = CounterRng::derive(CounterRng::derive(config.seed, kTargetStream),
                                                  static_cast<std::uint64_t>(s.id));
    out[i].image = s.image;
    out[i].targets = targets_from_instances(s.mask, s.boxes, s.areas, g, threshold, seed, config.balance_samples);
  });
  return out;
}

TrainedSet train_models(const RunConfig& config, std::span<const SyntheticScene> scenes,
                        const EpochCallback& on_epoch) {
  if (scenes.empty()) throw DataError("training split is empty");
  const std::uint64_t seed = CounterRng::derive(config.seed, kTrainStream);
  TrainedSet out;
  std::vector<TrainingSample> samples;
  std::string samples_for;
  for (NetworkRole role : kAllRoles) {
    const NetworkSpec spec = config.network_spec(role);
    const std::string geometry_key = std::to_string(spec.output_extent(config.dataset.width)) + "x" +
                                     std::to_string(spec.output_extent(config.dataset.height));
    if (samples_for != geometry_key) {
      samples = make_samples(scenes, config, spec);
      samples_for = geometry_key;
    }
    TrainResult r = train_network(spec, role, samples, config.train_config(role), role_seed(seed, role), on_epoch);
    Network net{spec, std::move(r.state)};
    switch (role) {
      case NetworkRole::kLargeLocalizer: out.models.large = std::move(net); break;
      case NetworkRole::kSmallLocalizer: out.models.small = std::move(net); break;
      case NetworkRole::kAllSizesLocalizer: out.models.all_sizes = std::move(net); break;
      case NetworkRole::kConfidence: out.models.confidence = std::move(net); break;
    }
    out.loss_history.emplace_back(role, std::move(r.loss_history));
  }
  return out;
}

std::vector<ImageEval> eval_inputs(std::span<const SyntheticScene> scenes,
                                   const std::vector<std::vector<Proposal>>& proposals) {
  if (proposals.size() != scenes.size()) throw std::invalid_argument("one proposal list per scene expected");
  std::vector<ImageEval> out(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    for (size_t k = 0; k < scenes[i].boxes.size(); ++k) out[i].gts.push_back({scenes[i].boxes[k], scenes[i].areas[k]});
    for (const Proposal& p : proposals[i]) out[i].proposals.push_back(p.box);
  }
  return out;
}

std::vector<std::vector<Proposal>> run_pipeline(std::span<const SyntheticScene> scenes, const ModelSet& models,
                                                const PipelineConfig& pipeline, int workers) {
  pipeline.validate();
  models.validate(pipeline);
  std::vector<std::vector<Proposal>> out(scenes.size());
  parallel_for(scenes.size(), workers, [&](size_t i) { out[i] = infer(scenes[i].image, models, pipeline); });
  return out;
}

std::vector<AblationVariant> ablation_variants(const PipelineConfig& base) {
  std::vector<AblationVariant> v;
  PipelineConfig p = base;
  p.scale_aware = false;
  p.multi_scale = false;
  p.refine = false;
  v.push_back({"single_scale", p});
  p.scale_aware = true;
  v.push_back({"scale_aware", p});
  p.multi_scale = true;
  v.push_back({"multi_scale", p});
  p.refine = true;
  v.push_back({"refinement", p});
  return v;
}

AblationResult run_ablation(std::span<const SyntheticScene> scenes, const ModelSet& models,
                            const RunConfig& config) {
  AblationResult r;
  for (const AblationVariant& v : ablation_variants(config.pipeline)) {
    const auto props = run_pipeline(scenes, models, v.pipeline, config.workers);
    const auto inputs = eval_inputs(scenes, props);
    r.variants.push_back(v.name);
    r.reports.push_back(evaluate(inputs, config.eval, config.workers));
  }
  return r;
}

std::string ablation_csv(const AblationResult& result, std::int64_t area_threshold) {
  auto fixed6 = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string out = "variant,n,metric,value\n";
  if (result.reports.empty()) return out;
  const EvalGrids& g = result.reports.front().grids;
  const double small_hi = static_cast<double>(area_threshold) + 1.0;
  const double inf = std::numeric_limits<double>::infinity();
  struct Metric {
    std::string name;
    std::function<double(const EvalReport&, size_t)> value;
  };
  std::vector<Metric> metrics;
  for (size_t t = 0; t < g.iou_thresholds.size(); ++t) {
    if (std::abs(g.iou_thresholds[t] - 0.5) > 1e-12 && std::abs(g.iou_thresholds[t] - 0.7) > 1e-12) continue;
    metrics.push_back({"recall@" + fixed6(g.iou_thresholds[t]).substr(0, 3),
                       [t](const EvalReport& r, size_t k) { return r.recall[k][t]; }});
  }
  metrics.push_back({"ar", [](const EvalReport& r, size_t k) { return r.ar[k]; }});
  metrics.push_back({"abo", [](const EvalReport& r, size_t k) { return r.abo[k]; }});
  metrics.push_back({"abo_small", [&](const EvalReport& r, size_t k) { return r.abo_in_range(k, 0.0, small_hi); }});
  metrics.push_back({"abo_large", [&](const EvalReport& r, size_t k) { return r.abo_in_range(k, small_hi, inf); }});
  for (size_t k = 0; k < g.n_values.size(); ++k) {
    for (const Metric& m : metrics) {
      for (size_t v = 0; v < result.reports.size(); ++v) {
        out += result.variants[v] + "," + std::to_string(g.n_values[k]) + "," + m.name + "," +
               fixed6(m.value(result.reports[v], k)) + "\n";
      }
    }
  }
  return out;
}

void cmd_gen(const RunConfig& config) {
  config.validate();
  for (const char* split : kSplits) {
    const DatasetConfig d = std::string(split) == "train" ? config.train_split() : config.test_split();
    const auto scenes = generate(d, config.workers);
    const fs::path dir = layout::data(config, split);
    make_dirs(dir);
    save_dataset(dir, scenes, d.describe());
  }
}

void cmd_train(const RunConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const fs::path data = layout::data(config, "train");
  verify_dataset(data);
  const auto scenes = load_dataset(data);
  const TrainedSet trained = train_models(config, scenes, on_epoch);

  const fs::path dir = layout::models(config);
  make_dirs(dir);
  Manifest m = start_manifest("models", config);
  link_input(m, "train_data", data / "manifest.txt");
  for (NetworkRole role : kAllRoles) {
    const Network& n = role == NetworkRole::kLargeLocalizer    ? trained.models.large
                       : role == NetworkRole::kSmallLocalizer  ? trained.models.small
                       : role == NetworkRole::kConfidence      ? trained.models.confidence
                                                               : *trained.models.all_sizes;
    const std::string file = role_name(role) + ".ckpt";
    save_checkpoint(dir / file, n.state);
    m.set("spec." + role_name(role), n.spec.hash());
    record_file_hash(m, file, dir / file);
  }
  std::string hist = "role,epoch,loss\n";
  for (const auto& [role, losses] : trained.loss_history) {
    for (size_t e = 0; e < losses.size(); ++e) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9g", losses[e]);
      hist += role_name(role) + "," + std::to_string(e) + "," + buf + "\n";
    }
  }
  write_text(dir / "loss_history.csv", hist);
  record_file_hash(m, "loss_history.csv", dir / "loss_history.csv");
  m.write(dir / "manifest.txt");
}

namespace {

ModelSet load_models(const RunConfig& config) {
  const fs::path dir = layout::models(config);
  verify_stage(dir);
  const Manifest m = read_manifest(dir / "manifest.txt");
  if (m.require("input.train_data") != sha256_file_or_throw(layout::data(config, "train") / "manifest.txt"))
    throw DataError("stale artifact " + (dir / "manifest.txt").string() + ": trained on a different dataset");
  ModelSet set;
  auto load = [&](NetworkRole role) {
    const NetworkSpec spec = config.network_spec(role);
    if (m.require("spec." + role_name(role)) != spec.hash())
      throw ConfigError("network config differs from the one " + role_name(role) + ".ckpt was trained with");
    return Network{spec, load_checkpoint(dir / (role_name(role) + ".ckpt"), spec)};
  };
  set.large = load(NetworkRole::kLargeLocalizer);
  set.small = load(NetworkRole::kSmallLocalizer);
  set.all_sizes = load(NetworkRole::kAllSizesLocalizer);
  set.confidence = load(NetworkRole::kConfidence);
  return set;
}

std::vector<SyntheticScene> load_verified(const RunConfig& config, const std::string& split) {
  const fs::path dir = layout::data(config, split);
  verify_dataset(dir);
  return load_dataset(dir);
}

// Groups proposal rows by image id, keeping file order.
std::vector<std::vector<Proposal>> read_proposals(const fs::path& path, std::span<const SyntheticScene> scenes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing artifact " + path.string());
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < scenes.size(); ++i) index[scene_name(scenes[i].id)] = i;
  std::vector<std::vector<Proposal>> out(scenes.size());
  for (const ProposalRow& row : read_proposal_csv(in)) {
    const auto it = index.find(row.image_id);
    if (it == index.end()) throw DataError(path.string() + ": unknown image id " + row.image_id);
    Proposal p;
    p.box = row.box;
    p.score = row.score;
    out[it->second].push_back(p);
  }
  return out;
}

}  // namespace

void cmd_infer(const RunConfig& config) {
  config.validate();
  const ModelSet models = load_models(config);
  const fs::path dir = layout::proposals(config);
  make_dirs(dir);
  Manifest m = start_manifest("proposals", config);
  m.set("pipeline", config.pipeline.describe());
  link_input(m, "models", layout::models(config) / "manifest.txt");
  for (const char* split : kSplits) {
    const auto scenes = load_verified(config, split);
    link_input(m, std::string(split) + "_data", layout::data(config, split) / "manifest.txt");
    std::vector<ImageInput> images;
    images.reserve(scenes.size());
    for (const SyntheticScene& s : scenes) images.push_back({scene_name(s.id), s.image});
    std::ostringstream csv;
    infer_batch(csv, images, models, config.pipeline, config.workers);
    const std::string file = std::string(split) + ".csv";
    write_text(dir / file, csv.str());
    record_file_hash(m, file, dir / file);
  }
  m.write(dir / "manifest.txt");
}

void cmd_eval(const RunConfig& config) {
  config.validate();
  const fs::path pdir = layout::proposals(config);
  verify_stage(pdir);
  const Manifest pm = read_manifest(pdir / "manifest.txt");
  Manifest m = start_manifest("eval", config);
  link_input(m, "proposals", pdir / "manifest.txt");
  for (const char* split : kSplits) {
    const fs::path data_manifest = layout::data(config, split) / "manifest.txt";
    if (pm.require("input." + std::string(split) + "_data") != sha256_file_or_throw(data_manifest))
      throw DataError("stale artifact " + (pdir / (std::string(split) + ".csv")).string() +
                      ": proposals were made for a different dataset");
    const auto scenes = load_verified(config, split);
    const auto props = read_proposals(pdir / (std::string(split) + ".csv"), scenes);
    const EvalReport report = evaluate(eval_inputs(scenes, props), config.eval, config.workers);
    const fs::path out = layout::eval(config) / split;
    emit_report(report, out);
    for (const char* f : {"recall.csv", "ar.csv", "abo.csv", "abo_by_area.csv"})
      record_file_hash(m, std::string(split) + "/" + f, out / f);
  }
  m.write(layout::eval(config) / "manifest.txt");
}

void cmd_ablate(const RunConfig& config) {
  config.validate();
  const ModelSet models = load_models(config);
  const auto scenes = load_verified(config, "test");
  const AblationResult result = run_ablation(scenes, models, config);
  const fs::path dir = layout::ablation(config);
  make_dirs(dir);
  write_text(dir / "ablation.csv", ablation_csv(result, config.effective_area_threshold()));
  Manifest m = start_manifest("ablation", config);
  m.set("pipeline", config.pipeline.describe());
  link_input(m, "models", layout::models(config) / "manifest.txt");
  link_input(m, "test_data", layout::data(config, "test") / "manifest.txt");
  record_file_hash(m, "ablation.csv", dir / "ablation.csv");
  m.write(dir / "manifest.txt");
}

}  // namespace pixprop
