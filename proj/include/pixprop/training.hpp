#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pixprop/convnet.hpp"
#include "pixprop/gridcodec.hpp"

namespace pixprop {

struct TrainingSample {
  Tensor image;
  TargetBundle targets;
};

// Which objective a network is trained with.
enum class NetworkRole {
  kLargeLocalizer,     // squared error on l* cells
  kSmallLocalizer,     // squared error on s* cells
  kAllSizesLocalizer,  // squared error on every foreground cell
  kConfidence,         // objectness + large/small cross-entropy
};

std::string role_name(NetworkRole role);

struct TrainConfig {
  Schedule schedule;
  int batch_size = 8;
  int epochs = 60;
  int workers = 1;
  InitOptions init;
};

struct SampleLoss {
  double loss = 0.0;
  Gradients gradients;
};

// Loss of one sample (summed over cells) and its parameter gradients.
SampleLoss sample_loss(const ModelState& state, const NetworkSpec& spec, NetworkRole role,
                       const TrainingSample& sample);

struct TrainResult {
  ModelState state;
  std::vector<double> loss_history;  // mean per-sample loss for each epoch
};

// Called after every epoch with (role, epoch, mean loss).
using EpochCallback = std::function<void(NetworkRole, int, double)>;

// Mini-batch SGD. The batch gradient is the mean of per-sample gradients,
// reduced in sample order so results do not depend on the worker count.
// Throws DivergenceError when a loss becomes non-finite.
TrainResult train_network(const NetworkSpec& spec, NetworkRole role,
                          std::span<const TrainingSample> samples, const TrainConfig& config,
                          std::uint64_t seed, const EpochCallback& on_epoch = {});

struct TrainedModels {
  TrainResult large;
  TrainResult small;
  TrainResult confidence;
};

// Trains the large-size localizer, the small-size localizer and the
// confidence network independently from per-role derived seeds.
TrainedModels train(const NetworkSpec& large_spec, const NetworkSpec& small_spec,
                    const NetworkSpec& confidence_spec, std::span<const TrainingSample> samples,
                    const TrainConfig& config, std::uint64_t seed, const EpochCallback& on_epoch = {});

std::uint64_t role_seed(std::uint64_t seed, NetworkRole role);

}  // namespace pixprop
