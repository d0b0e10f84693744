#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cellseg/volume.hpp"

namespace cellseg {

/// Counter-based generator: every draw is a pure function of (seed, stream, counter),
/// so parallel loops produce the same values regardless of thread count.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const noexcept;
  /// Uniform in [0, 1).
  double uniform(std::uint64_t stream, std::uint64_t counter) const noexcept;
  /// Standard normal (Box-Muller on two derived uniforms).
  double normal(std::uint64_t stream, std::uint64_t counter) const noexcept;

 private:
  std::uint64_t seed_;
};

struct FoamParams {
  Dims dims{64, 64, 64};
  Spacing spacing{};
  std::uint32_t n_cells = 20;
  double membrane_width = 1.0;   ///< µm
  std::uint64_t seed = 0;
  std::uint32_t protrusions = 0;  ///< hemispherical bumps pushed across cell faces
  double protrusion_radius = 0;   ///< µm; <= 0 picks a quarter of the center spacing

  void validate() const;
};

struct Foam {
  ScalarVolume raw;    ///< membrane signal in [0, 1], max 1
  LabelVolume truth;   ///< partition into labels 1..n_cells
  std::vector<std::array<double, 3>> centers;  ///< µm, center of label i+1
  double min_center_distance = 0;              ///< µm
};

/// Poisson-disk centers, Voronoi labels under the physical metric, membrane
/// signal from the label boundaries. Throws DataError when the centers cannot
/// be packed.
Foam make_foam(const FoamParams& params);
Foam make_foam(Dims dims, Spacing spacing, std::uint32_t n_cells, double membrane_width,
               std::uint64_t seed);

/// Voronoi foam for explicit centers (µm). Ties go to the lower center index.
Foam make_foam_from_centers(Dims dims, Spacing spacing,
                            const std::vector<std::array<double, 3>>& centers,
                            double membrane_width);

/// Membrane intensity for a label partition: voxels within half the membrane
/// width of a label interface, smoothed and scaled to a maximum of 1.
ScalarVolume membrane_signal(const LabelVolume& labels, double membrane_width);

struct DegradeParams {
  double noise_sigma = 0;
  double attenuation_per_z = 0;  ///< per slice: intensity *= exp(-a * z)
  double gap_fraction = 0;       ///< fraction of membrane voxels erased in ball patches
  double gap_radius = 2.0;       ///< patch radius in voxels of the finest axis
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaps first, then attenuation, then additive Gaussian noise clamped to [0, 1].
/// All-zero parameters return the input unchanged.
ScalarVolume degrade(const ScalarVolume& raw, const DegradeParams& params);
ScalarVolume degrade(const ScalarVolume& raw, double noise_sigma, double attenuation_per_z,
                     double gap_fraction, std::uint64_t seed);

/// Membrane voxels (raw >= 0.5) and how many of them `degrade` zeroed.
struct GapCount {
  std::size_t membrane = 0;
  std::size_t erased = 0;
};
GapCount count_gaps(const ScalarVolume& raw, const ScalarVolume& degraded);

/// key = value listing of the generation parameters.
void write_manifest(const std::filesystem::path& path, const FoamParams& foam,
                    const DegradeParams& degrade);

}  // namespace cellseg
