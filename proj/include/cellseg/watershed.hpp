#pragma once

#include <vector>

#include "cellseg/seeding.hpp"
#include "cellseg/volume.hpp"

namespace cellseg {

/// Optional instrumentation of the flood.
struct FloodTrace {
  std::vector<float> popped_keys;  ///< keys in pop order (non-decreasing)
};

/// Priority flood from seeds over 6-connected voxels. Queue key is
/// (elevation, insertion sequence); a neighbor is labeled on insertion and
/// enqueued at max(q[neighbor], popped key). Every voxel ends up in exactly one basin.
LabelVolume seeded_watershed(const ScalarVolume& q, const SeedSet& seeds,
                             FloodTrace* trace = nullptr);

/// Relabels to consecutive 1..L preserving the order of label values; 0 stays 0.
LabelVolume compact_labels(const LabelVolume& x);

}  // namespace cellseg
