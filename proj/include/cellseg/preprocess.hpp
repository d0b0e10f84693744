#pragma once

#include <array>
#include <filesystem>
#include <optional>

#include "cellseg/volume.hpp"

namespace cellseg {

/// Cumulative intensity distribution at 256 levels (level k stands for k/255).
using Cdf256 = std::array<double, 256>;

struct PreprocessParams {
  double ball_radius = 5.0;               ///< µm
  bool subtract_background = true;
  std::optional<Spacing> target_spacing;  ///< resample when set
  std::optional<Cdf256> reference_cdf;    ///< histogram-match when set

  void validate() const;
};

/// Background subtraction: v minus its morphological opening by an ellipsoid of
/// physical radius `radius_um`, clamped to [0, 1].
ScalarVolume rolling_ball_subtract(const ScalarVolume& v, double radius_um);

/// Grayscale erosion/dilation by the same ellipsoid; out-of-volume voxels are ignored.
ScalarVolume erode_ellipsoid(const ScalarVolume& v, double radius_um);
ScalarVolume dilate_ellipsoid(const ScalarVolume& v, double radius_um);

/// Trilinear resampling onto a grid of the given spacing covering the same extent.
ScalarVolume resample(const ScalarVolume& v, const Spacing& target_spacing);

/// CDF of the 256-level quantization of v (values clamped to [0, 1]).
Cdf256 intensity_cdf(const ScalarVolume& v);

/// 256-level quantization used by histogram matching: round(v*255)/255.
float quantize256(float v);

/// Monotone remap of v so its 256-level CDF follows `reference`.
ScalarVolume histogram_match(const ScalarVolume& v, const Cdf256& reference);

void validate_cdf(const Cdf256& cdf);

/// Sidecar format: 256 little-endian f64 values.
Cdf256 read_reference_cdf(const std::filesystem::path& path);
void write_reference_cdf(const Cdf256& cdf, const std::filesystem::path& path);

/// Separable Gaussian smoothing with physical sigma (µm); taps reach ceil(4 sigma) voxels
/// and renormalized at the volume border. sigma <= 0 returns a copy.
ScalarVolume gaussian_smooth(const ScalarVolume& v, double sigma_um);

/// Classical membrane probability map: Gaussian smoothing then min-max
/// normalization to [0, 1]. Stand-in for a learned probability map.
ScalarVolume fallback_probmap(const ScalarVolume& v, double smooth_sigma_um);

/// Runs the configured preprocessing chain: rolling ball, resample, histogram match.
ScalarVolume preprocess(const ScalarVolume& v, const PreprocessParams& params);

}  // namespace cellseg
