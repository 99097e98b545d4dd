#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixprop/convnet.hpp"
#include "pixprop/geometry.hpp"
#include "pixprop/superpix.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

struct PipelineConfig {
  double nms_threshold = 0.8;
  double enlarge_factor = 2.0;
  int top_k = 2000;  // per scale, before refinement and NMS
  bool refine = true;
  double score_floor = 0.0;  // proposals scoring below this are not emitted
  bool multi_scale = true;
  // Off: the all-sizes localizer replaces the fused pair.
  bool scale_aware = true;
  SlicParams slic;

  void validate() const;
  std::string describe() const;
};

struct Network {
  NetworkSpec spec;
  ModelState state;
};

struct ModelSet {
  Network confidence;
  Network large;
  Network small;
  std::optional<Network> all_sizes;

  // Throws ConfigError when a state does not belong to its spec or a spec
  // lacks the heads the pipeline reads.
  void validate(const PipelineConfig& config) const;
};

// One initial proposal per cell of a single scale, scored by objectness and
// tagged with the original scale.
std::vector<Proposal> cell_proposals(const Tensor& image, const ModelSet& models, bool scale_aware);

// Rank-ordered prefix of at most k proposals.
std::vector<Proposal> top_k(std::vector<Proposal> proposals, int k);

// Pooled, rank-ordered candidates of every scale before NMS.
std::vector<Proposal> candidates(const Tensor& image, const ModelSet& models, const PipelineConfig& config);

// Candidates after NMS and the score floor, in rank order.
std::vector<Proposal> infer(const Tensor& image, const ModelSet& models, const PipelineConfig& config);

struct ImageInput {
  std::string id;
  Tensor image;
};

// Writes the header and every image's proposals in input order.
void infer_batch(std::ostream& out, std::span<const ImageInput> images, const ModelSet& models,
                 const PipelineConfig& config, int workers = 1);

}  // namespace pixprop
