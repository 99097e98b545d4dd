#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pixprop/gridcodec.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

enum class Nonlinearity { kRectifier, kNone };

// One convolution. Dilation spaces the kernel taps ("holes") so the
// receptive field grows without further downsampling.
struct LayerSpec {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  int dilation = 1;
  Nonlinearity nonlinearity = Nonlinearity::kRectifier;

  // Spatial output extent for an input extent, or 0 when the layer does not fit.
  int output_extent(int in) const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class HeadKind {
  kBoxOffsets,  // 4 linear channels, summed with the coordinate basis
  kSoftmax2,    // 2 channels, per-cell softmax; channel 1 is the positive class
};

struct HeadSpec {
  std::string name;
  HeadKind kind = HeadKind::kBoxOffsets;
  std::vector<LayerSpec> layers;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

// Shared trunk followed by named heads that all consume the trunk output.
struct NetworkSpec {
  std::string name;
  int in_channels = 3;
  double input_shift = 0.5;  // subtracted from every input value
  std::vector<LayerSpec> trunk;
  std::vector<HeadSpec> heads;

  void validate() const;
  std::string canonical() const;
  std::string hash() const;
  // Output grid extent for an input extent along one axis.
  int output_extent(int in) const;
  size_t layer_count() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline constexpr const char* kBoxHead = "boxes";
inline constexpr const char* kObjectnessHead = "objectness";
inline constexpr const char* kSizeHead = "size";

// Trunk: 3x3 convs with 16, 32, 32, 64 channels, strides 2, 2, 1, 1 and
// dilation 2 on the last layer (output stride 4).
std::vector<LayerSpec> default_trunk();
// Trunk plus a 1x1x4 linear box head.
NetworkSpec default_localizer_spec(const std::string& name);
// Trunk plus objectness and size branches, each 3x3x32 then 1x1x2 softmax.
NetworkSpec default_confidence_spec(const std::string& name = "confidence");

struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 0;
  std::vector<double> weight;  // (out, in, k, k)
  std::vector<double> bias;    // (out)

  size_t fan_in() const { return static_cast<size_t>(in_channels) * kernel * kernel; }
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

enum class ParamGroup { kTrunk, kHead };

// Parameter gradients, laid out like ModelState::layers.
using Gradients = std::vector<ConvParams>;

struct ModelState {
  std::string name;
  std::string spec_hash;
  std::uint64_t seed = 0;
  int epoch = 0;
  // Bumped by every update; caches from older versions are rejected.
  std::uint64_t version = 0;
  std::vector<ConvParams> layers;  // trunk layers, then heads in declaration order
  std::vector<ParamGroup> groups;
  Gradients velocity;  // momentum buffers

  size_t parameter_count() const;
  bool all_finite() const;
};

Gradients zero_gradients(const ModelState& state);
void accumulate(Gradients& into, const Gradients& g, double scale = 1.0);
double max_abs(const Gradients& g);

struct InitOptions {
  // Standard deviation of trunk weights; 0 selects sqrt(2 / fan_in).
  double trunk_std = 0.0;
  double head_std = 0.01;
};

// Zero-mean Gaussian weights, zero biases, seeded per layer.
ModelState init(const NetworkSpec& spec, std::uint64_t seed, const InitOptions& options = {});

struct LayerCache {
  std::vector<double> cols;  // im2col matrix (fan_in, out_h * out_w)
  Tensor output;             // post-activation
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
};

struct ForwardCache {
  std::string spec_hash;
  std::uint64_t state_version = 0;
  std::vector<LayerCache> layers;  // same order as ModelState::layers
  std::map<std::string, Tensor> head_outputs;
};

struct ForwardResult {
  // Box heads yield absolute coordinates (offsets plus basis); softmax heads
  // yield per-cell probabilities.
  std::map<std::string, Tensor> outputs;
  GridGeometry geometry;
  ForwardCache cache;
};

ForwardResult forward(const ModelState& state, const NetworkSpec& spec, const Tensor& image);

// Gradients of a scalar loss given its gradients with respect to the named
// outputs (absolute coordinates or probabilities). Missing heads contribute
// nothing.
Gradients backward(const ModelState& state, const NetworkSpec& spec, const ForwardCache& cache,
                   const std::map<std::string, Tensor>& output_grads);

struct Schedule {
  double trunk_lr = 0.01;
  double head_lr = 0.01;
  double momentum = 0.9;
  int decay_epochs = 20;
  double decay_factor = 0.1;

  double learning_rate(ParamGroup group, int epoch) const;
};

// w <- w - lr * v with v <- momentum * v + g, lr taken from the state's
// epoch. Throws DivergenceError on non-finite gradients.
void sgd_step(ModelState& state, const Gradients& gradients, const Schedule& schedule);

// Text header, then little-endian IEEE-754 doubles in layer order.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec);

}  // namespace pixprop
