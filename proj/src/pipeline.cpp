#include "cellseg/pipeline.hpp"

#include <chrono>

#include "cellseg/diagnostics.hpp"
#include "cellseg/preprocess.hpp"
#include "cellseg/watershed.hpp"

namespace cellseg {

double PipelineResult::seconds(const std::string& stage) const {
  for (const auto& [name, s] : stage_seconds) {
    if (name == stage) return s;
  }
  return 0.0;
}

double PipelineResult::total_seconds() const {
  double t = 0.0;
  for (const auto& entry : stage_seconds) t += entry.second;
  return t;
}

ScalarVolume stage_preprocess(const ScalarVolume& raw, const PipelineConfig& cfg) {
  return run_stage(kStagePreprocess, [&] {
    PreprocessParams p = cfg.preprocess;
    if (cfg.reference_cdf_path && !p.reference_cdf) {
      p.reference_cdf = read_reference_cdf(*cfg.reference_cdf_path);
    }
    return preprocess(raw, p);
  });
}

ScalarVolume stage_probmap(const ScalarVolume& preprocessed, const PipelineConfig& cfg) {
  return run_stage(kStageProbmap, [&] { return fallback_probmap(preprocessed, cfg.fallback_sigma); });
}

SeedingResult stage_seed(const ScalarVolume& probmap, const PipelineConfig& cfg) {
  return run_stage(kStageSeed, [&] {
    require_probability_map(probmap, "seeding input");
    return generate_seeds(probmap, cfg.h_value);
  });
}

LabelVolume stage_watershed(const ScalarVolume& probmap, const SeedSet& seeds) {
  return run_stage(kStageWatershed, [&] { return seeded_watershed(probmap, seeds); });
}

LabelVolume stage_refine(const ScalarVolume& probmap, const LabelVolume& watershed,
                         const PipelineConfig& cfg, RefineReport* report) {
  return run_stage(kStageRefine, [&] {
    require_probability_map(probmap, "refinement input");
    return mean_field_refine(probmap, watershed, cfg.crf, report);
  });
}

namespace {

class StageClock {
 public:
  StageClock(PipelineResult& r, const char* stage)
      : r_(r), stage_(stage), start_(std::chrono::steady_clock::now()) {}
  void stop() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    r_.stage_seconds.emplace_back(stage_, dt.count());
  }

 private:
  PipelineResult& r_;
  const char* stage_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

PipelineResult run_pipeline(const ScalarVolume& raw, const PipelineConfig& cfg,
                            const ScalarVolume* probmap, const StageCallback& on_stage) {
  cfg.validate();
  WarningCapture warnings;
  PipelineResult r;
  auto done = [&](const char* stage) {
    if (on_stage) on_stage(stage, r);
  };
  if (probmap) {
    r.probmap = *probmap;
  } else {
    StageClock pre(r, kStagePreprocess);
    const ScalarVolume preprocessed = stage_preprocess(raw, cfg);
    pre.stop();
    StageClock pm(r, kStageProbmap);
    r.probmap = stage_probmap(preprocessed, cfg);
    r.fallback_used = true;
    pm.stop();
  }
  done(kStageProbmap);

  StageClock seed(r, kStageSeed);
  r.seeding = stage_seed(r.probmap, cfg);
  seed.stop();
  done(kStageSeed);

  StageClock ws(r, kStageWatershed);
  r.watershed = stage_watershed(r.probmap, r.seeding.seeds);
  ws.stop();
  done(kStageWatershed);

  if (cfg.skip_crf) {
    r.final_labels = r.watershed;
    r.crf_skipped = true;
  } else {
    StageClock crf(r, kStageRefine);
    r.final_labels = stage_refine(r.probmap, r.watershed, cfg, &r.crf);
    crf.stop();
  }
  done(kStageRefine);
  r.warnings = warnings.messages();
  return r;
}

}  // namespace cellseg
