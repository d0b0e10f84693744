#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cellseg/config.hpp"
#include "cellseg/crf.hpp"
#include "cellseg/seeding.hpp"
#include "cellseg/volume.hpp"

namespace cellseg {

/// Stage names, in execution order.
inline constexpr const char* kStagePreprocess = "preprocess";
inline constexpr const char* kStageProbmap = "probmap";
inline constexpr const char* kStageSeed = "seed";
inline constexpr const char* kStageWatershed = "watershed";
inline constexpr const char* kStageRefine = "refine";

struct PipelineResult {
  ScalarVolume probmap;
  bool fallback_used = false;
  SeedingResult seeding;
  LabelVolume watershed;
  LabelVolume final_labels;
  RefineReport crf;
  bool crf_skipped = false;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::vector<std::string> warnings;

  double seconds(const std::string& stage) const;
  double total_seconds() const;
};

/// Called after each stage completes, so artifacts can be written as they appear.
using StageCallback = std::function<void(const std::string& stage, const PipelineResult&)>;

/// Runs a single stage; library exceptions come back as StageError carrying the name.
template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ParameterError& e) {
    throw StageError(stage, e.what(), false);
  } catch (const DataError& e) {
    throw StageError(stage, e.what(), true);
  }
}

/// Stage bodies, shared by the pipeline and the per-stage subcommands.
ScalarVolume stage_preprocess(const ScalarVolume& raw, const PipelineConfig& cfg);
ScalarVolume stage_probmap(const ScalarVolume& preprocessed, const PipelineConfig& cfg);
SeedingResult stage_seed(const ScalarVolume& probmap, const PipelineConfig& cfg);
LabelVolume stage_watershed(const ScalarVolume& probmap, const SeedSet& seeds);
LabelVolume stage_refine(const ScalarVolume& probmap, const LabelVolume& watershed,
                         const PipelineConfig& cfg, RefineReport* report);

/// Full run. With `probmap` given (file-supplied map), preprocessing and the
/// classical map are skipped and `raw` may be empty; otherwise the classical map is used.
PipelineResult run_pipeline(const ScalarVolume& raw, const PipelineConfig& cfg,
                            const ScalarVolume* probmap = nullptr,
                            const StageCallback& on_stage = {});

}  // namespace cellseg
