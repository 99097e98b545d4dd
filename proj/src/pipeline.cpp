#include "pixprop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "pixprop/errors.hpp"
#include "pixprop/gridcodec.hpp"
#include "pixprop/parallel.hpp"
#include "pixprop/scalefusion.hpp"

namespace pixprop {

void PipelineConfig::validate() const {
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) throw ConfigError("pipeline.nms_threshold must be in (0, 1]");
  if (!(enlarge_factor >= 1.0) || !std::isfinite(enlarge_factor))
    throw ConfigError("pipeline.enlarge_factor must be >= 1");
  if (top_k < 1) throw ConfigError("pipeline.top_k must be positive");
  if (!(score_floor >= 0.0 && score_floor <= 1.0)) throw ConfigError("pipeline.score_floor must be in [0, 1]");
  if (slic.segments < 0) throw ConfigError("pipeline.slic.segments must be >= 0");
  if (!(slic.compactness >= 0.0)) throw ConfigError("pipeline.slic.compactness must be >= 0");
  if (slic.iterations < 1) throw ConfigError("pipeline.slic.iterations must be >= 1");
}

std::string PipelineConfig::describe() const {
  std::ostringstream s;
  s.precision(17);
  s << "nms_threshold=" << nms_threshold << " enlarge_factor=" << enlarge_factor << " top_k=" << top_k
    << " refine=" << refine << " score_floor=" << score_floor << " multi_scale=" << multi_scale
    << " scale_aware=" << scale_aware << " slic.segments=" << slic.segments
    << " slic.compactness=" << slic.compactness << " slic.iterations=" << slic.iterations
    << " slic.color_scale=" << slic.color_scale;
  return s.str();
}

namespace {

bool has_head(const NetworkSpec& spec, const std::string& name, HeadKind kind) {
  return std::any_of(spec.heads.begin(), spec.heads.end(),
                     [&](const HeadSpec& h) { return h.name == name && h.kind == kind; });
}

void check_network(const Network& n, const char* role) {
  if (n.state.spec_hash != n.spec.hash())
    throw ConfigError(std::string(role) + " model was trained with a different network spec");
  if (n.state.layers.size() != n.spec.layer_count())
    throw ConfigError(std::string(role) + " model has the wrong number of layers");
}

PredictionGrid box_grid(const Network& net, const Tensor& image) {
  ForwardResult r = forward(net.state, net.spec, image);
  return grid_from_tensor(r.outputs.at(kBoxHead), r.geometry, GridMode::kAbsolute);
}

}  // namespace

void ModelSet::validate(const PipelineConfig& config) const {
  check_network(confidence, "confidence");
  if (!has_head(confidence.spec, kObjectnessHead, HeadKind::kSoftmax2) ||
      !has_head(confidence.spec, kSizeHead, HeadKind::kSoftmax2))
    throw ConfigError("confidence spec needs objectness and size softmax heads");
  auto check_localizer = [](const Network& n, const char* role) {
    check_network(n, role);
    if (!has_head(n.spec, kBoxHead, HeadKind::kBoxOffsets))
      throw ConfigError(std::string(role) + " spec needs a box head");
  };
  if (config.scale_aware) {
    check_localizer(large, "large localizer");
    check_localizer(small, "small localizer");
  } else {
    if (!all_sizes) throw ConfigError("single-network inference needs the all-sizes localizer");
    check_localizer(*all_sizes, "all-sizes localizer");
  }
}

std::vector<Proposal> cell_proposals(const Tensor& image, const ModelSet& models, bool scale_aware) {
  ForwardResult conf = forward(models.confidence.state, models.confidence.spec, image);
  const GridGeometry geometry = conf.geometry;
  const Tensor& p = conf.outputs.at(kObjectnessHead);

  PredictionGrid boxes;
  if (scale_aware) {
    const PredictionGrid large = box_grid(models.large, image);
    const PredictionGrid small = box_grid(models.small, image);
    if (large.geometry != geometry || small.geometry != geometry)
      throw ConfigError("localizer and confidence grids differ in size");
    const Tensor& zt = conf.outputs.at(kSizeHead);
    CellGrid<double> z(geometry.rows, geometry.cols);
    for (int r = 0; r < geometry.rows; ++r)
      for (int c = 0; c < geometry.cols; ++c) z.at(r, c) = zt.at(1, r, c);
    boxes = fuse(large, small, z);
  } else {
    if (!models.all_sizes) throw ConfigError("single-network inference needs the all-sizes localizer");
    boxes = box_grid(*models.all_sizes, image);
    if (boxes.geometry != geometry) throw ConfigError("localizer and confidence grids differ in size");
  }

  std::vector<Proposal> out;
  out.reserve(geometry.cell_count());
  for (int r = 0; r < geometry.rows; ++r) {
    for (int c = 0; c < geometry.cols; ++c) {
      Proposal prop;
      prop.box = clip(boxes.at(r, c));
      prop.score = p.at(1, r, c);
      prop.provenance = {ScaleTag::kOriginal, VariantTag::kInitial, r * geometry.cols + c};
      out.push_back(prop);
    }
  }
  return out;
}

std::vector<Proposal> top_k(std::vector<Proposal> proposals, int k) {
  sort_by_rank(proposals);
  if (static_cast<int>(proposals.size()) > k) proposals.resize(k);
  return proposals;
}

namespace {

std::vector<Proposal> scale_candidates(const Tensor& image, const ModelSet& models, const PipelineConfig& config) {
  std::vector<Proposal> kept = top_k(cell_proposals(image, models, config.scale_aware), config.top_k);
  if (!config.refine) return kept;
  const SuperpixelMap sp = slic(image, config.slic);
  std::vector<Proposal> out;
  out.reserve(kept.size() * 3);
  for (const Proposal& prop : kept) {
    auto [shrunk, expanded] = refine(prop, sp);
    out.push_back(prop);
    out.push_back(shrunk);
    out.push_back(expanded);
  }
  return out;
}

}  // namespace

std::vector<Proposal> candidates(const Tensor& image, const ModelSet& models, const PipelineConfig& config) {
  config.validate();
  models.validate(config);
  std::vector<Proposal> pool = scale_candidates(image, models, config);
  if (config.multi_scale) {
    const Tensor big = enlarge_image(image, config.enlarge_factor);
    const std::vector<Proposal> enlarged = map_back(scale_candidates(big, models, config));
    pool.insert(pool.end(), enlarged.begin(), enlarged.end());
  }
  sort_by_rank(pool);
  return pool;
}

std::vector<Proposal> infer(const Tensor& image, const ModelSet& models, const PipelineConfig& config) {
  std::vector<Proposal> kept = nms(candidates(image, models, config), config.nms_threshold);
  std::erase_if(kept, [&](const Proposal& p) { return p.score < config.score_floor; });
  return kept;
}

void infer_batch(std::ostream& out, std::span<const ImageInput> images, const ModelSet& models,
                 const PipelineConfig& config, int workers) {
  config.validate();
  models.validate(config);
  std::vector<std::string> blocks(images.size());
  parallel_for(images.size(), workers, [&](size_t i) {
    std::ostringstream s;
    const std::vector<Proposal> props = infer(images[i].image, models, config);
    write_proposal_rows(s, images[i].id, props);
    blocks[i] = s.str();
  });
  out << kProposalCsvHeader << '\n';
  for (const std::string& b : blocks) out << b;
  if (!out) throw IoError("failed to write proposal rows");
}

}  // namespace pixprop
