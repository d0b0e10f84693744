#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <list>
#include <map>
#include <optional>
#include <sstream>

#include "cellseg/config.hpp"
#include "cellseg/diagnostics.hpp"
#include "cellseg/metrics.hpp"
#include "cellseg/pipeline.hpp"
#include "cellseg/synth.hpp"
#include "cellseg/volume_io.hpp"
#include "cellseg/watershed.hpp"

namespace cellseg::cli {

namespace fs = std::filesystem;

std::string artifact_path(const std::string& prefix, const std::string& what) {
  return prefix + "_" + what;
}

namespace {

/// Command-line settings that map onto config keys; only flags actually given override.
class Settings {
 public:
  void option(CLI::App* app, const std::string& flag, const std::string& key,
              const std::string& help) {
    auto& slot = storage_.emplace_back();
    bound_.push_back({app->add_option(flag, slot, help), key, &slot, {}});
  }
  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& value,
            const std::string& help) {
    bound_.push_back({app->add_flag(flag, help), key, nullptr, value});
  }
  void config_options(CLI::App* app) {
    app->add_option("--config", config_path_, "key = value settings file");
    option(app, "--threads", "threads", "worker threads (0 = runtime default)");
  }
  ConfigMap overrides() const {
    ConfigMap m;
    for (const auto& b : bound_) {
      if (b.opt->count() == 0) continue;
      m[b.key] = b.slot ? *b.slot : b.flag_value;
    }
    return m;
  }
  PipelineConfig resolve() const {
    const ConfigMap file = config_path_.empty() ? ConfigMap{} : read_config_file(config_path_);
    PipelineConfig cfg = resolve_config(file, overrides());
    cfg.validate();
    set_thread_count(cfg.threads);
    return cfg;
  }

 private:
  struct Bound {
    CLI::Option* opt;
    std::string key;
    std::string* slot;
    std::string flag_value;
  };
  std::list<std::string> storage_;
  std::vector<Bound> bound_;
  std::string config_path_;
};

void preprocess_options(CLI::App* app, Settings& s) {
  s.option(app, "--ball-radius", "ball_radius", "rolling-ball radius (µm)");
  s.flag(app, "--no-background", "subtract_background", "false", "skip background subtraction");
  s.option(app, "--target-spacing", "target_spacing", "resample to 'z y x' µm");
  s.option(app, "--reference-cdf", "reference_cdf", "256 x f64 CDF sidecar for histogram matching");
}

void crf_options(CLI::App* app, Settings& s) {
  for (const char* name : {"w1", "w2", "sigma_alpha", "sigma_beta", "sigma_gamma", "iterations",
                           "epsilon_floor", "candidate_radius", "range_step"}) {
    const std::string key = std::string("crf.") + name;
    s.option(app, "--" + key, key, "CRF " + std::string(name));
  }
}

void pipeline_options(CLI::App* app, Settings& s) {
  preprocess_options(app, s);
  s.option(app, "--fallback-sigma", "fallback_sigma", "smoothing of the classical map (µm)");
  s.option(app, "--probmap", "probmap", "probability map VOL3 (skips preprocessing)");
  s.flag(app, "--fallback", "fallback", "true", "classical probability map");
  s.option(app, "--h-value", "h_value", "H-maxima height (µm)");
  s.flag(app, "--skip-crf", "skip_crf", "true", "stop after the watershed");
  crf_options(app, s);
  s.option(app, "--tol", "tol", "boundary tolerance for evaluation (voxels)");
}

std::string probmap_source(const PipelineConfig& cfg) {
  return cfg.probmap_path ? "file " + cfg.probmap_path->string() : "classical fallback";
}

void write_pipeline_report(std::ostream& out, const PipelineResult& r, const PipelineConfig& cfg,
                           const std::optional<EvalReport>& eval, bool kv) {
  const auto prec = out.precision();
  if (kv) {
    out.precision(17);
    out << "probmap_source=" << (r.fallback_used ? "classical-fallback" : "file") << "\n"
        << "otsu_threshold=" << r.seeding.threshold << "\n"
        << "seeds=" << r.seeding.seeds.size() << "\n"
        << "watershed_cells=" << count_cells(r.watershed) << "\n"
        << "final_cells=" << count_cells(r.final_labels) << "\n"
        << "crf_skipped=" << (r.crf_skipped ? 1 : 0) << "\n";
    if (!r.crf_skipped) {
      for (std::size_t i = 0; i < r.crf.changed_per_iteration.size(); ++i) {
        out << "crf.changed." << i + 1 << "=" << r.crf.changed_per_iteration[i] << "\n";
      }
      out << "crf.vanished_labels=" << r.crf.vanished_labels.size() << "\n"
          << "crf.max_normalization_error=" << r.crf.max_normalization_error << "\n";
    }
    for (const auto& [stage, s] : r.stage_seconds) out << "time." << stage << "=" << s << "\n";
    out << "time.total=" << r.total_seconds() << "\n";
    out << "warnings=" << r.warnings.size() << "\n";
    if (eval) {
      out << "eval.precision=" << eval->precision << "\n"
          << "eval.recall=" << eval->recall << "\n"
          << "eval.f_score=" << eval->f_score << "\n"
          << "eval.truth_cells=" << eval->truth_cells << "\n"
          << "eval.tol=" << eval->boundary_tolerance << "\n";
    }
  } else {
    out << "probability map: " << probmap_source(cfg) << "\n"
        << "otsu threshold: " << r.seeding.threshold << "\n"
        << "seeds: " << r.seeding.seeds.size() << "\n"
        << "cells: watershed " << count_cells(r.watershed) << ", final "
        << count_cells(r.final_labels) << (r.crf_skipped ? " (CRF skipped)" : "") << "\n";
    if (!r.crf_skipped) {
      out << "CRF changed voxels per iteration:";
      for (auto c : r.crf.changed_per_iteration) out << " " << c;
      out << "\n";
      if (!r.crf.vanished_labels.empty()) {
        out << "CRF removed labels:";
        for (auto l : r.crf.vanished_labels) out << " " << l;
        out << "\n";
      }
    }
    out << "stage times (s):\n";
    for (const auto& [stage, s] : r.stage_seconds) out << "  " << stage << " " << s << "\n";
    out << "  total " << r.total_seconds() << "\n";
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
    if (eval) {
      EvalReport e = *eval;
      e.stage_seconds.clear();
      write_report_text(out, e);
    }
  }
  out.precision(prec);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw DataError("cannot write " + path);
}

// ---------------------------------------------------------------------------

int cmd_pipeline(const PipelineConfig& cfg, const std::string& input, const std::string& prefix,
                 const std::string& truth_path, std::ostream& out) {
  // Everything is read before the first artifact is written.
  const ScalarVolume raw = read_scalar_volume(input);
  std::optional<ScalarVolume> probmap;
  if (cfg.probmap_path) {
    probmap = read_scalar_volume(*cfg.probmap_path);
    require_same_dims(*probmap, raw, "probability map vs input");
  }
  std::optional<LabelVolume> truth;
  if (!truth_path.empty()) truth = read_label_volume(truth_path);
  if (const auto dir = fs::path(prefix).parent_path(); !dir.empty()) fs::create_directories(dir);

  auto write_stage = [&](const std::string& stage, const PipelineResult& r) {
    if (stage == kStageProbmap) write_volume(r.probmap, artifact_path(prefix, "probmap.vol"));
    if (stage == kStageSeed) {
      write_volume(r.seeding.seeds.to_labels(r.probmap.dims(), r.probmap.spacing()),
                   artifact_path(prefix, "seeds.vol"));
    }
    if (stage == kStageWatershed) write_volume(r.watershed, artifact_path(prefix, "watershed.vol"));
    if (stage == kStageRefine) write_volume(r.final_labels, artifact_path(prefix, "final.vol"));
  };
  const PipelineResult r = run_pipeline(raw, cfg, probmap ? &*probmap : nullptr, write_stage);

  std::optional<EvalReport> eval;
  if (truth) {
    eval = boundary_prf(r.final_labels, *truth, cfg.tolerance);
    eval->stage_seconds = r.stage_seconds;
  }
  std::ostringstream text, kv;
  write_pipeline_report(text, r, cfg, eval, false);
  write_pipeline_report(kv, r, cfg, eval, true);
  write_text_file(artifact_path(prefix, "report.txt"), text.str());
  write_text_file(artifact_path(prefix, "report.kv"), kv.str());
  out << text.str();
  return kOk;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_bench(const PipelineConfig& cfg, const std::string& input, int repetitions,
              std::ostream& out, std::ostream& err) {
  if (repetitions < 1) throw ParameterError("repetitions must be >= 1");
  const ScalarVolume raw = read_scalar_volume(input);
  std::optional<ScalarVolume> probmap;
  if (cfg.probmap_path) probmap = read_scalar_volume(*cfg.probmap_path);
  const double slices = static_cast<double>(raw.dims().z);

  std::map<std::string, std::vector<double>> per_stage;
  std::vector<double> totals;
  std::optional<LabelVolume> first;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineResult r = run_pipeline(raw, cfg, probmap ? &*probmap : nullptr);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    totals.push_back(dt.count() / slices);
    for (const auto& [stage, s] : r.stage_seconds) per_stage[stage].push_back(s / slices);
    if (!first) {
      first = std::move(r.final_labels);
    } else if (!(r.final_labels == *first)) {
      err << "error: repetition " << rep + 1 << " produced different labels\n";
      return kInternal;
    }
  }
  const auto prec = out.precision(6);
  out << "repetitions=" << repetitions << "\n" << "slices=" << raw.dims().z << "\n";
  for (const char* stage :
       {kStagePreprocess, kStageProbmap, kStageSeed, kStageWatershed, kStageRefine}) {
    const auto it = per_stage.find(stage);
    if (it != per_stage.end()) out << "per_slice." << stage << "=" << median(it->second) << "\n";
  }
  out << "per_slice.total=" << median(totals) << "\n";
  out << "samples.total=";
  for (std::size_t i = 0; i < totals.size(); ++i) out << (i ? "," : "") << totals[i];
  out << "\n" << "deterministic=1\n";
  out.precision(prec);
  return kOk;
}

std::array<std::uint8_t, 3> label_color(std::uint32_t label) {
  std::uint64_t h = CounterRng(0x5eed).bits(0, label);
  // Keep colors bright enough to read over grayscale.
  return {static_cast<std::uint8_t>(64 + (h & 0xff) % 192),
          static_cast<std::uint8_t>(64 + ((h >> 8) & 0xff) % 192),
          static_cast<std::uint8_t>(64 + ((h >> 16) & 0xff) % 192)};
}

int cmd_export_slices(const std::string& labels_path, const std::string& raw_path,
                      const std::string& out_dir, std::ostream& out) {
  const LabelVolume labels = read_label_volume(labels_path);
  const ScalarVolume raw = read_scalar_volume(raw_path);
  require_same_dims(labels, raw, "export-slices");
  const MaskVolume boundary = boundary_voxels(labels);
  fs::create_directories(out_dir);
  const Dims& d = labels.dims();
  float lo = raw.size() ? raw[0] : 0.0f, hi = lo;
  for (float v : raw.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  const float span = hi > lo ? hi - lo : 1.0f;
  for (std::size_t z = 0; z < d.z; ++z) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%04zu.ppm", z);
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    f << "P6\n" << d.x << " " << d.y << "\n255\n";
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        std::array<std::uint8_t, 3> px;
        if (boundary.at(z, y, x)) {
          px = label_color(labels.at(z, y, x));
        } else {
          const auto g = static_cast<std::uint8_t>(std::lround(255.0f * (raw.at(z, y, x) - lo) / span));
          px = {g, g, g};
        }
        f.write(reinterpret_cast<const char*>(px.data()), 3);
      }
    if (!f) throw DataError("cannot write " + path.string());
  }
  out << "wrote " << d.z << " slices to " << out_dir << "\n";
  return kOk;
}

struct SynthArgs {
  std::vector<std::size_t> dims{64, 64, 64};
  std::vector<double> spacing{1, 1, 1};
  std::uint32_t cells = 20;
  double membrane_width = 1.0;
  std::uint64_t seed = 0;
  std::uint32_t protrusions = 0;
  double noise = 0, attenuation = 0, gap = 0;
  std::uint64_t degrade_seed = 1;
};

int cmd_synth(const SynthArgs& a, const std::string& prefix, std::ostream& out) {
  FoamParams fp;
  fp.dims = {a.dims[0], a.dims[1], a.dims[2]};
  fp.spacing = {a.spacing[0], a.spacing[1], a.spacing[2]};
  fp.n_cells = a.cells, fp.membrane_width = a.membrane_width, fp.seed = a.seed;
  fp.protrusions = a.protrusions;
  DegradeParams dp;
  dp.noise_sigma = a.noise, dp.attenuation_per_z = a.attenuation, dp.gap_fraction = a.gap;
  dp.seed = a.degrade_seed;
  dp.validate();
  const Foam foam = make_foam(fp);
  if (const auto dir = fs::path(prefix).parent_path(); !dir.empty()) fs::create_directories(dir);
  write_volume(degrade(foam.raw, dp), artifact_path(prefix, "raw.vol"));
  write_volume(foam.raw, artifact_path(prefix, "clean.vol"));
  write_volume(foam.truth, artifact_path(prefix, "truth.vol"));
  write_manifest(artifact_path(prefix, "manifest.txt"), fp, dp);
  out << "wrote " << prefix << "_{raw,clean,truth}.vol with " << a.cells << " cells\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Volumetric cell segmentation: seeded watershed with dense-CRF refinement"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "all subcommands");

  std::string input, output, prefix, second, truth;

  Settings pipe_s;
  auto* pipe = app.add_subcommand("pipeline", "preprocess, probability map, seeds, watershed, CRF");
  pipe->add_option("input", input, "raw volume (VOL3)")->required();
  pipe->add_option("prefix", prefix, "output prefix")->required();
  pipe->add_option("--truth", truth, "truth labels for evaluation");
  pipe_s.config_options(pipe);
  pipeline_options(pipe, pipe_s);

  Settings bench_s;
  int repetitions = 3;
  auto* bench = app.add_subcommand("bench", "median per-slice timing of the pipeline");
  bench->add_option("input", input, "raw volume (VOL3)")->required();
  bench->add_option("--repetitions", repetitions, "runs")->capture_default_str();
  bench_s.config_options(bench);
  pipeline_options(bench, bench_s);

  Settings pre_s;
  auto* pre = app.add_subcommand("preprocess", "background subtraction, resampling, matching");
  pre->add_option("input", input)->required();
  pre->add_option("output", output)->required();
  pre_s.config_options(pre);
  preprocess_options(pre, pre_s);

  Settings pm_s;
  auto* pm = app.add_subcommand("probmap", "classical probability map from a preprocessed volume");
  pm->add_option("input", input)->required();
  pm->add_option("output", output)->required();
  pm_s.config_options(pm);
  pm_s.option(pm, "--fallback-sigma", "fallback_sigma", "smoothing (µm)");

  Settings seed_s;
  auto* seed = app.add_subcommand("seed", "H-maxima seeds from a probability map");
  seed->add_option("probmap", input)->required();
  seed->add_option("output", output, "seed label volume")->required();
  seed_s.config_options(seed);
  seed_s.option(seed, "--h-value", "h_value", "H-maxima height (µm)");

  Settings ws_s;
  auto* ws = app.add_subcommand("watershed", "seeded watershed");
  ws->add_option("probmap", input)->required();
  ws->add_option("seeds", second, "seed label volume")->required();
  ws->add_option("output", output)->required();
  ws_s.config_options(ws);

  Settings refine_s;
  auto* refine = app.add_subcommand("refine", "dense-CRF refinement of watershed labels");
  refine->add_option("probmap", input)->required();
  refine->add_option("labels", second, "watershed labels")->required();
  refine->add_option("output", output)->required();
  refine_s.config_options(refine);
  crf_options(refine, refine_s);

  Settings eval_s;
  bool eval_kv = false;
  auto* eval = app.add_subcommand("eval", "boundary precision/recall/F against truth");
  eval->add_option("prediction", input)->required();
  eval->add_option("truth", second)->required();
  eval->add_flag("--kv", eval_kv, "key=value output");
  eval_s.config_options(eval);
  eval_s.option(eval, "--tol", "tol", "boundary tolerance (voxels)");

  auto* exp = app.add_subcommand("export-slices", "one PPM per z slice with label boundaries");
  exp->add_option("labels", input)->required();
  exp->add_option("raw", second)->required();
  exp->add_option("out_dir", output)->required();

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "synthetic Voronoi foam with truth labels");
  syn->add_option("prefix", prefix)->required();
  syn->add_option("--dims", sa.dims, "z y x")->expected(3)->capture_default_str();
  syn->add_option("--spacing", sa.spacing, "z y x (µm)")->expected(3)->capture_default_str();
  syn->add_option("--cells", sa.cells)->capture_default_str();
  syn->add_option("--membrane-width", sa.membrane_width, "µm")->capture_default_str();
  syn->add_option("--seed", sa.seed)->capture_default_str();
  syn->add_option("--protrusions", sa.protrusions)->capture_default_str();
  syn->add_option("--noise", sa.noise)->capture_default_str();
  syn->add_option("--attenuation", sa.attenuation, "per slice")->capture_default_str();
  syn->add_option("--gap", sa.gap, "fraction of membrane voxels")->capture_default_str();
  syn->add_option("--degrade-seed", sa.degrade_seed)->capture_default_str();

  std::vector<std::string> argv_store{"cellseg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*pipe) return cmd_pipeline(pipe_s.resolve(), input, prefix, truth, out);
    if (*bench) return cmd_bench(bench_s.resolve(), input, repetitions, out, err);
    if (*pre) {
      const PipelineConfig cfg = pre_s.resolve();
      write_volume(stage_preprocess(read_scalar_volume(input), cfg), output);
      return kOk;
    }
    if (*pm) {
      const PipelineConfig cfg = pm_s.resolve();
      write_volume(stage_probmap(read_scalar_volume(input), cfg), output);
      out << "probability map: classical fallback\n";
      return kOk;
    }
    if (*seed) {
      const PipelineConfig cfg = seed_s.resolve();
      const ScalarVolume q = read_scalar_volume(input);
      const SeedingResult s = stage_seed(q, cfg);
      write_volume(s.seeds.to_labels(q.dims(), q.spacing()), output);
      out << "otsu threshold " << s.threshold << ", seeds " << s.seeds.size() << "\n";
      return kOk;
    }
    if (*ws) {
      ws_s.resolve();
      const ScalarVolume q = read_scalar_volume(input);
      const LabelVolume seeds = read_label_volume(second);
      require_same_dims(q, seeds, "watershed seeds");
      write_volume(stage_watershed(q, seeds_from_labels(seeds)), output);
      return kOk;
    }
    if (*refine) {
      const PipelineConfig cfg = refine_s.resolve();
      const ScalarVolume q = read_scalar_volume(input);
      const LabelVolume x0 = read_label_volume(second);
      RefineReport rep;
      write_volume(stage_refine(q, x0, cfg, &rep), output);
      out << "CRF changed voxels per iteration:";
      for (auto c : rep.changed_per_iteration) out << " " << c;
      out << "\n";
      return kOk;
    }
    if (*eval) {
      const PipelineConfig cfg = eval_s.resolve();
      const EvalReport r =
          boundary_prf(read_label_volume(input), read_label_volume(second), cfg.tolerance);
      if (eval_kv) write_report_kv(out, r);
      else write_report_text(out, r);
      return kOk;
    }
    if (*exp) return cmd_export_slices(input, second, output, out);
    if (*syn) return cmd_synth(sa, prefix, out);
  } catch (const StageError& e) {
    err << "error: " << e.what() << "\n";
    return e.is_data_error() ? kDataError : kUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}

}  // namespace cellseg::cli
