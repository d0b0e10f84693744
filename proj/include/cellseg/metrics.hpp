#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cellseg/volume.hpp"

namespace cellseg {

struct EvalReport {
  double precision = 0;
  double recall = 0;
  double f_score = 0;
  std::size_t predicted_cells = 0;
  std::size_t truth_cells = 0;
  std::size_t predicted_boundary = 0;  ///< boundary voxel counts
  std::size_t truth_boundary = 0;
  std::size_t predicted_hits = 0;      ///< predicted boundary voxels near a truth boundary
  std::size_t truth_hits = 0;
  int boundary_tolerance = 1;          ///< voxels, Chebyshev
  std::vector<std::pair<std::string, double>> stage_seconds;
};

/// Voxels with a 6-neighbor of a different label.
MaskVolume boundary_voxels(const LabelVolume& labels);

/// Number of distinct nonzero labels.
std::size_t count_cells(const LabelVolume& labels);

/// Boundary precision/recall/F. A predicted boundary voxel counts when a truth
/// boundary voxel lies within Chebyshev distance `tol`, and symmetrically for recall.
/// Both boundaries empty gives P = R = 1; one empty gives 0 for the affected ratios.
EvalReport boundary_prf(const LabelVolume& pred, const LabelVolume& truth, int tol = 1);

struct CountStats {
  double mean = 0;
  double stddev = 0;  ///< population
};

CountStats cell_count_stats(std::span<const std::size_t> counts);
CountStats cell_count_stats(std::span<const EvalReport> reports);

void write_report_text(std::ostream& out, const EvalReport& r);
/// One `key=value` per line.
void write_report_kv(std::ostream& out, const EvalReport& r);

}  // namespace cellseg
