#include "pixprop/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pixprop/errors.hpp"
#include "pixprop/hashing.hpp"
#include "pixprop/rng.hpp"

namespace pixprop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainSplitStream = 1;
constexpr std::uint64_t kTestSplitStream = 2;

std::string shape_name(ShapeKind k) { return k == ShapeKind::kRectangle ? "rectangle" : "ellipse"; }

ShapeKind shape_from(const std::string& s) {
  if (s == "rectangle") return ShapeKind::kRectangle;
  if (s == "ellipse") return ShapeKind::kEllipse;
  throw ConfigError("dataset.shapes: unknown shape '" + s + "'");
}

json encode(const RunConfig& c, bool with_seed) {
  json j;
  j["seed"] = with_seed ? json(c.seed) : json(nullptr);
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;

  const DatasetConfig& d = c.dataset;
  json shapes = json::array();
  for (ShapeKind k : d.shapes) shapes.push_back(shape_name(k));
  j["dataset"] = {{"width", d.width},           {"height", d.height},
                  {"train_scenes", d.scene_count}, {"test_scenes", c.test_scenes},
                  {"objects_min", d.objects_min}, {"objects_max", d.objects_max},
                  {"shapes", shapes},           {"area_min", d.area_min},
                  {"area_max", d.area_max},     {"aspect_max", d.aspect_max},
                  {"noise", d.noise},           {"color_margin", d.color_margin},
                  {"max_overlap", d.max_overlap}, {"max_retries", d.max_retries}};

  json trunk = json::array();
  for (const LayerSpec& l : c.trunk)
    trunk.push_back({{"out_channels", l.out_channels},
                     {"kernel", l.kernel},
                     {"stride", l.stride},
                     {"padding", l.padding},
                     {"dilation", l.dilation}});
  j["network"] = {{"trunk", trunk}, {"input_shift", c.input_shift}};

  const TrainConfig& t = c.training;
  j["training"] = {{"trunk_lr", t.schedule.trunk_lr},
                   {"head_lr", t.schedule.head_lr},
                   {"confidence_trunk_lr", c.confidence_trunk_lr},
                   {"confidence_head_lr", c.confidence_head_lr},
                   {"momentum", t.schedule.momentum},
                   {"decay_epochs", t.schedule.decay_epochs},
                   {"decay_factor", t.schedule.decay_factor},
                   {"batch_size", t.batch_size},
                   {"epochs", t.epochs},
                   {"trunk_init_std", t.init.trunk_std},
                   {"head_init_std", t.init.head_std},
                   {"area_threshold", c.area_threshold},
                   {"balance_samples", c.balance_samples}};

  const PipelineConfig& p = c.pipeline;
  j["pipeline"] = {{"nms_threshold", p.nms_threshold},
                   {"enlarge_factor", p.enlarge_factor},
                   {"top_k", p.top_k},
                   {"refine", p.refine},
                   {"score_floor", p.score_floor},
                   {"multi_scale", p.multi_scale},
                   {"scale_aware", p.scale_aware},
                   {"slic",
                    {{"segments", p.slic.segments},
                     {"compactness", p.slic.compactness},
                     {"iterations", p.slic.iterations},
                     {"color_scale", p.slic.color_scale}}}};

  j["eval"] = {{"n_values", c.eval.n_values},
               {"iou_thresholds", c.eval.iou_thresholds},
               {"area_edges", c.eval.area_edges},
               {"area_n", c.eval.area_n}};
  return j;
}

RunConfig decode(const json& j) {
  RunConfig c;
  if (j.at("seed").is_null()) throw ConfigError("seed is mandatory (set it in the config or pass --seed)");
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.workers = j.at("workers").get<int>();

  const json& d = j.at("dataset");
  c.dataset.width = d.at("width").get<int>();
  c.dataset.height = d.at("height").get<int>();
  c.dataset.scene_count = d.at("train_scenes").get<int>();
  c.test_scenes = d.at("test_scenes").get<int>();
  c.dataset.objects_min = d.at("objects_min").get<int>();
  c.dataset.objects_max = d.at("objects_max").get<int>();
  c.dataset.shapes.clear();
  for (const json& s : d.at("shapes")) c.dataset.shapes.push_back(shape_from(s.get<std::string>()));
  c.dataset.area_min = d.at("area_min").get<double>();
  c.dataset.area_max = d.at("area_max").get<double>();
  c.dataset.aspect_max = d.at("aspect_max").get<double>();
  c.dataset.noise = d.at("noise").get<double>();
  c.dataset.color_margin = d.at("color_margin").get<double>();
  c.dataset.max_overlap = d.at("max_overlap").get<double>();
  c.dataset.max_retries = d.at("max_retries").get<int>();

  const json& n = j.at("network");
  c.trunk.clear();
  for (const json& l : n.at("trunk")) {
    LayerSpec s;
    s.out_channels = l.value("out_channels", 16);
    s.kernel = l.value("kernel", 3);
    s.stride = l.value("stride", 1);
    s.padding = l.value("padding", 1);
    s.dilation = l.value("dilation", 1);
    c.trunk.push_back(s);
  }
  c.input_shift = n.at("input_shift").get<double>();

  const json& t = j.at("training");
  c.training.schedule.trunk_lr = t.at("trunk_lr").get<double>();
  c.training.schedule.head_lr = t.at("head_lr").get<double>();
  c.confidence_trunk_lr = t.at("confidence_trunk_lr").get<double>();
  c.confidence_head_lr = t.at("confidence_head_lr").get<double>();
  c.training.schedule.momentum = t.at("momentum").get<double>();
  c.training.schedule.decay_epochs = t.at("decay_epochs").get<int>();
  c.training.schedule.decay_factor = t.at("decay_factor").get<double>();
  c.training.batch_size = t.at("batch_size").get<int>();
  c.training.epochs = t.at("epochs").get<int>();
  c.training.init.trunk_std = t.at("trunk_init_std").get<double>();
  c.training.init.head_std = t.at("head_init_std").get<double>();
  c.area_threshold = t.at("area_threshold").get<std::int64_t>();
  c.balance_samples = t.at("balance_samples").get<int>();

  const json& p = j.at("pipeline");
  c.pipeline.nms_threshold = p.at("nms_threshold").get<double>();
  c.pipeline.enlarge_factor = p.at("enlarge_factor").get<double>();
  c.pipeline.top_k = p.at("top_k").get<int>();
  c.pipeline.refine = p.at("refine").get<bool>();
  c.pipeline.score_floor = p.at("score_floor").get<double>();
  c.pipeline.multi_scale = p.at("multi_scale").get<bool>();
  c.pipeline.scale_aware = p.at("scale_aware").get<bool>();
  const json& s = p.at("slic");
  c.pipeline.slic.segments = s.at("segments").get<int>();
  c.pipeline.slic.compactness = s.at("compactness").get<double>();
  c.pipeline.slic.iterations = s.at("iterations").get<int>();
  c.pipeline.slic.color_scale = s.at("color_scale").get<double>();

  const json& e = j.at("eval");
  c.eval.n_values = e.at("n_values").get<std::vector<int>>();
  c.eval.iou_thresholds = e.at("iou_thresholds").get<std::vector<double>>();
  c.eval.area_edges = e.at("area_edges").get<std::vector<double>>();
  c.eval.area_n = e.at("area_n").get<int>();
  return c;
}

// Rejects keys that the defaults do not know about.
void check_keys(const json& value, const json& schema, const std::string& path) {
  if (schema.is_object()) {
    if (!value.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [k, v] : value.items()) {
      const std::string sub = path.empty() ? k : path + "." + k;
      if (!schema.contains(k)) throw ConfigError("unknown config key '" + sub + "'");
      check_keys(v, schema.at(k), sub);
    }
  } else if (schema.is_array() && !schema.empty() && schema.front().is_object()) {
    if (!value.is_array()) throw ConfigError(path + ": expected an array");
    for (const json& v : value) check_keys(v, schema.front(), path + "[]");
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

void apply_override(json& doc, const json& schema, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &doc;
  const json* sch = &schema;
  std::stringstream parts(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(parts, key, '.')) keys.push_back(key);
  for (size_t i = 0; i < keys.size(); ++i) {
    if (!sch->is_object() || !sch->contains(keys[i])) throw ConfigError("unknown config key '" + path + "'");
    sch = &sch->at(keys[i]);
    if (!node->contains(keys[i])) (*node)[keys[i]] = *sch;
    node = &(*node)[keys[i]];
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = value;
}

RunConfig decode_checked(const json& doc) {
  RunConfig c;
  try {
    c = decode(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  dataset.validate();
  if (test_scenes < 0) throw ConfigError("dataset.test_scenes must be >= 0");
  if (trunk.empty()) throw ConfigError("network.trunk must not be empty");
  for (const NetworkRole r : {NetworkRole::kLargeLocalizer, NetworkRole::kConfidence}) {
    try {
      network_spec(r).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("network: ") + e.what());
    }
    if (network_spec(r).output_extent(dataset.width) < 1 || network_spec(r).output_extent(dataset.height) < 1)
      throw ConfigError("network: trunk leaves no output cells");
  }
  const Schedule& s = training.schedule;
  if (!(s.trunk_lr > 0.0) || !(s.head_lr > 0.0) || !(confidence_trunk_lr > 0.0) || !(confidence_head_lr > 0.0))
    throw ConfigError("training: learning rates must be positive");
  if (!(s.momentum >= 0.0 && s.momentum < 1.0)) throw ConfigError("training.momentum must be in [0, 1)");
  if (s.decay_epochs < 1 || !(s.decay_factor > 0.0 && s.decay_factor <= 1.0))
    throw ConfigError("training: bad learning-rate decay");
  if (training.batch_size < 1 || training.epochs < 0) throw ConfigError("training: bad batch size or epochs");
  if (training.init.trunk_std < 0.0 || !(training.init.head_std > 0.0))
    throw ConfigError("training: bad init standard deviations");
  if (area_threshold < 0) throw ConfigError("training.area_threshold must be >= 0");
  if (balance_samples < 1) throw ConfigError("training.balance_samples must be positive");
  pipeline.validate();
  eval.validate();
}

DatasetConfig RunConfig::train_split() const {
  DatasetConfig d = dataset;
  d.seed = CounterRng::derive(seed, kTrainSplitStream);
  return d;
}

DatasetConfig RunConfig::test_split() const {
  DatasetConfig d = dataset;
  d.scene_count = test_scenes;
  d.seed = CounterRng::derive(seed, kTestSplitStream);
  return d;
}

std::int64_t RunConfig::effective_area_threshold() const {
  return area_threshold > 0 ? area_threshold : default_area_threshold(dataset.width, dataset.height);
}

NetworkSpec RunConfig::network_spec(NetworkRole role) const {
  NetworkSpec spec = role == NetworkRole::kConfidence ? default_confidence_spec(role_name(role))
                                                      : default_localizer_spec(role_name(role));
  spec.trunk = trunk;
  spec.input_shift = input_shift;
  return spec;
}

TrainConfig RunConfig::train_config(NetworkRole role) const {
  TrainConfig t = training;
  t.workers = workers;
  if (role == NetworkRole::kConfidence) {
    t.schedule.trunk_lr = confidence_trunk_lr;
    t.schedule.head_lr = confidence_head_lr;
  }
  return t;
}

std::string RunConfig::to_json() const { return encode(*this, true).dump(2) + "\n"; }

std::string RunConfig::hash() const { return sha256_hex(encode(*this, true).dump()); }

RunConfig parse_run_config(const std::string& json_text) {
  const json schema = encode(RunConfig{}, false);
  const json doc = parse_json(json_text, "config");
  check_keys(doc, schema, "");
  json merged = schema;
  merged.merge_patch(doc);
  return decode_checked(merged);
}

RunConfig load_run_config(const std::optional<fs::path>& file, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> seed, std::optional<std::string> output_dir,
                          std::optional<int> workers) {
  const json schema = encode(RunConfig{}, false);
  json doc = schema;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::stringstream buf;
    buf << in.rdbuf();
    const json user = parse_json(buf.str(), file->string());
    check_keys(user, schema, "");
    doc.merge_patch(user);
  }
  for (const std::string& o : overrides) apply_override(doc, schema, o);
  if (seed) doc["seed"] = *seed;
  if (output_dir) doc["output_dir"] = *output_dir;
  if (workers) doc["workers"] = *workers;
  check_keys(doc, schema, "");
  return decode_checked(doc);
}

}  // namespace pixprop
