#pragma once

#include <span>
#include <vector>

#include "pixprop/geometry.hpp"
#include "pixprop/gridcodec.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

// Per-cell blend of the two localizers weighted by the large-size
// confidence: z * t_large + (1 - z) * t_small. Endpoints are exact and every
// component stays between the two inputs. Clipping is left to the caller.
PredictionGrid fuse(const PredictionGrid& t_large, const PredictionGrid& t_small, const CellGrid<double>& z);

inline constexpr double kDefaultEnlargeFactor = 2.0;

// Bilinear resampling with half-pixel centres; output extent is
// round(factor * input extent). Throws std::invalid_argument for factor < 1.
Tensor enlarge_image(const Tensor& image, double factor);

// Normalized coordinates are already relative to their own image, so mapping
// proposals from the enlarged pass back to the original frame only retags
// their scale.
std::vector<Proposal> map_back(std::span<const Proposal> enlarged);

}  // namespace pixprop
