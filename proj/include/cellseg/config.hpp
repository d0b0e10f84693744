#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "cellseg/crf.hpp"
#include "cellseg/preprocess.hpp"

namespace cellseg {

/// Flat `key = value` settings; later sources overwrite earlier ones.
using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Throws ParameterError (with the line number) on malformed lines.
ConfigMap parse_config(const std::string& text);
ConfigMap read_config_file(const std::filesystem::path& path);

/// Everything a pipeline run needs.
struct PipelineConfig {
  PreprocessParams preprocess;
  std::optional<std::filesystem::path> reference_cdf_path;
  double fallback_sigma = 0.5;  ///< µm, smoothing of the classical probability map
  std::optional<std::filesystem::path> probmap_path;  ///< file-supplied map; wins when set
  bool fallback = true;                               ///< classical map when no file is given
  double h_value = 1.0;  ///< µm
  bool skip_crf = false;
  CrfParams crf;
  int threads = 0;
  int tolerance = 1;

  void validate() const;
};

/// Applies known keys over `cfg`. Unknown keys and unparsable values throw ParameterError.
/// Probability-map source: `probmap` beats `fallback = true` within one layer, while
/// `fallback = true` clears a `probmap` from an earlier layer.
void apply_config(PipelineConfig& cfg, const ConfigMap& values);

/// defaults < file < overrides.
PipelineConfig resolve_config(const ConfigMap& file, const ConfigMap& overrides);

/// key = value listing of every setting, parseable by parse_config.
std::string format_config(const PipelineConfig& cfg);

}  // namespace cellseg
