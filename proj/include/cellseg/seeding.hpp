#pragma once

#include <cstdint>
#include <vector>

#include "cellseg/volume.hpp"

namespace cellseg {

/// Distances in µm; double precision so exactness can be checked.
using DistanceMap = Volume<double>;

/// Otsu threshold over 256 equal bins of [0, 1]. Bin b holds floor(q*256);
/// the returned t = k/256 splits bins < k from bins >= k. Ties go to the lower k.
double otsu_threshold(const ScalarVolume& q);

/// Between-class variance of splitting the 256-bin histogram of q at bin k.
double otsu_between_class_variance(const ScalarVolume& q, int k);

/// Membrane voxels: q >= threshold.
MaskVolume membrane_mask(const ScalarVolume& q, double threshold);

/// Exact anisotropic Euclidean distance (µm) from every voxel to the nearest
/// nonzero voxel of `membrane`. Separable lower-envelope passes along x, y, z.
DistanceMap distance_transform(const MaskVolume& membrane);

/// Squared-distance variant on arbitrary sites; used by the CRF candidate search.
/// `sites` is nonzero where distance is zero. Unreachable voxels get +inf.
Volume<double> squared_distance_transform(const MaskVolume& sites);

/// Grayscale reconstruction by dilation of `marker` under `mask` (26-connectivity),
/// hybrid raster/anti-raster scan plus FIFO propagation. Requires marker <= mask.
Volume<double> reconstruct_by_dilation(const Volume<double>& marker, const Volume<double>& mask);

/// Reconstruction of (d - H) under d.
Volume<double> h_maxima_transform(const DistanceMap& d, double h);

struct Seed {
  std::uint32_t label = 0;
  std::vector<std::size_t> voxels;  ///< ascending linear indices
};

struct SeedSet {
  std::vector<Seed> seeds;  ///< labels 1..L in order
  double h_value = 0.0;
  double threshold = 0.0;

  std::size_t size() const noexcept { return seeds.size(); }
  bool empty() const noexcept { return seeds.empty(); }
  LabelVolume to_labels(const Dims& dims, const Spacing& spacing) const;
};

/// Regional maxima (26-connected plateaus with no strictly higher neighbor) of
/// the H-maxima transform, labeled 1..L in raster order of their first voxel.
/// Plateaus at reconstructed height <= 0 belong to the membrane level and are dropped.
SeedSet h_maxima_seeds(const DistanceMap& d, double h);

/// Seeds read back from a label volume (each nonzero label is one seed region).
SeedSet seeds_from_labels(const LabelVolume& labels);

struct SeedingResult {
  double threshold = 0.0;
  DistanceMap distance;
  SeedSet seeds;
};

/// Otsu -> interior mask (q < t) -> distance to membrane -> H-maxima seeds.
SeedingResult generate_seeds(const ScalarVolume& q, double h);

}  // namespace cellseg
