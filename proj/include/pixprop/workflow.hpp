#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pixprop/config.hpp"
#include "pixprop/evalkit.hpp"
#include "pixprop/pipeline.hpp"
#include "pixprop/synthdata.hpp"
#include "pixprop/training.hpp"

namespace pixprop {

// Supervision for every scene on the grid of `spec`.
std::vector<TrainingSample> make_samples(std::span<const SyntheticScene> scenes, const RunConfig& config,
                                         const NetworkSpec& spec);

struct TrainedSet {
  ModelSet models;  // all_sizes always present
  std::vector<std::pair<NetworkRole, std::vector<double>>> loss_history;
};

inline constexpr NetworkRole kAllRoles[] = {NetworkRole::kLargeLocalizer, NetworkRole::kSmallLocalizer,
                                            NetworkRole::kAllSizesLocalizer, NetworkRole::kConfidence};

// Trains the large, small, all-sizes and confidence networks.
TrainedSet train_models(const RunConfig& config, std::span<const SyntheticScene> scenes,
                        const EpochCallback& on_epoch = {});

std::vector<ImageEval> eval_inputs(std::span<const SyntheticScene> scenes,
                                   const std::vector<std::vector<Proposal>>& proposals);

// Proposals for every scene, in scene order.
std::vector<std::vector<Proposal>> run_pipeline(std::span<const SyntheticScene> scenes, const ModelSet& models,
                                                const PipelineConfig& pipeline, int workers);

struct AblationVariant {
  std::string name;
  PipelineConfig pipeline;
};

// single_scale, scale_aware, multi_scale, refinement: each adds one stage to
// the previous one.
std::vector<AblationVariant> ablation_variants(const PipelineConfig& base);

struct AblationResult {
  std::vector<std::string> variants;
  std::vector<EvalReport> reports;
};

AblationResult run_ablation(std::span<const SyntheticScene> scenes, const ModelSet& models,
                            const RunConfig& config);

// variant,n,metric,value with one row per variant for every (n, metric).
std::string ablation_csv(const AblationResult& result, std::int64_t area_threshold);

// Commands. Each reads its inputs from and writes its artifacts under
// config.output_dir, verifying upstream manifests first.
void cmd_gen(const RunConfig& config);
void cmd_train(const RunConfig& config, const EpochCallback& on_epoch = {});
void cmd_infer(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_ablate(const RunConfig& config);

namespace layout {
std::filesystem::path data(const RunConfig& c, const std::string& split);
std::filesystem::path models(const RunConfig& c);
std::filesystem::path proposals(const RunConfig& c);
std::filesystem::path eval(const RunConfig& c);
std::filesystem::path ablation(const RunConfig& c);
}  // namespace layout

}  // namespace pixprop
