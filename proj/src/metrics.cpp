#include "cellseg/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <unordered_set>

namespace cellseg {

MaskVolume boundary_voxels(const LabelVolume& labels) {
  const Dims& d = labels.dims();
  MaskVolume b(d, labels.spacing(), 0);
  const long nz = static_cast<long>(d.z);
#pragma omp parallel for schedule(static)
  for (long z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        const std::uint32_t l = labels.at(z, y, x);
        b.at(z, y, x) = (x + 1 < d.x && labels.at(z, y, x + 1) != l) ||
                        (x > 0 && labels.at(z, y, x - 1) != l) ||
                        (y + 1 < d.y && labels.at(z, y + 1, x) != l) ||
                        (y > 0 && labels.at(z, y - 1, x) != l) ||
                        (z + 1 < nz && labels.at(z + 1, y, x) != l) ||
                        (z > 0 && labels.at(z - 1, y, x) != l);
      }
  return b;
}

std::size_t count_cells(const LabelVolume& labels) {
  std::unordered_set<std::uint32_t> seen;
  for (std::uint32_t l : labels.data()) {
    if (l) seen.insert(l);
  }
  return seen.size();
}

namespace {

// Chebyshev dilation by `tol`: separable sliding-window OR along each axis.
MaskVolume dilate_box(const MaskVolume& m, int tol) {
  if (tol <= 0) return m;
  const Dims& d = m.dims();
  MaskVolume cur = m, next = m;
  const std::size_t strides[3] = {d.x * d.y, d.x, 1};
  const std::size_t lens[3] = {d.z, d.y, d.x};
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t len = lens[axis], stride = strides[axis];
    std::vector<std::size_t> bases;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if ((i / stride) % len == 0) bases.push_back(i);
    }
    for (std::size_t base : bases) {
      // Count of set voxels in the window [i - tol, i + tol].
      long count = 0;
      const long n = static_cast<long>(len);
      for (long j = 0; j <= std::min<long>(tol, n - 1); ++j) count += cur[base + j * stride];
      for (long i = 0; i < n; ++i) {
        next[base + i * stride] = count > 0;
        if (i + tol + 1 < n) count += cur[base + (i + tol + 1) * stride];
        if (i - tol >= 0) count -= cur[base + (i - tol) * stride];
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

double ratio(std::size_t hits, std::size_t total, bool both_empty) {
  if (both_empty) return 1.0;
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

EvalReport boundary_prf(const LabelVolume& pred, const LabelVolume& truth, int tol) {
  require_same_dims(pred, truth, "boundary_prf");
  if (tol < 0) throw ParameterError("boundary tolerance must be >= 0");
  const MaskVolume bp = boundary_voxels(pred);
  const MaskVolume bt = boundary_voxels(truth);
  const MaskVolume near_p = dilate_box(bp, tol);
  const MaskVolume near_t = dilate_box(bt, tol);

  EvalReport r;
  r.boundary_tolerance = tol;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    r.predicted_boundary += bp[i];
    r.truth_boundary += bt[i];
    r.predicted_hits += bp[i] && near_t[i];
    r.truth_hits += bt[i] && near_p[i];
  }
  const bool both_empty = r.predicted_boundary == 0 && r.truth_boundary == 0;
  r.precision = ratio(r.predicted_hits, r.predicted_boundary, both_empty);
  r.recall = ratio(r.truth_hits, r.truth_boundary, both_empty);
  r.f_score = r.precision + r.recall > 0
                  ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                  : 0.0;
  r.predicted_cells = count_cells(pred);
  r.truth_cells = count_cells(truth);
  return r;
}

CountStats cell_count_stats(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ParameterError("cell_count_stats needs at least one count");
  double sum = 0;
  for (std::size_t c : counts) sum += static_cast<double>(c);
  CountStats s;
  s.mean = sum / static_cast<double>(counts.size());
  double var = 0;
  for (std::size_t c : counts) var += (static_cast<double>(c) - s.mean) * (static_cast<double>(c) - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(counts.size()));
  return s;
}

CountStats cell_count_stats(std::span<const EvalReport> reports) {
  std::vector<std::size_t> counts;
  for (const auto& r : reports) counts.push_back(r.predicted_cells);
  return cell_count_stats(counts);
}

void write_report_text(std::ostream& out, const EvalReport& r) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(4);
  out << "boundary precision " << r.precision << "  recall " << r.recall << "  F " << r.f_score
      << "  (tol " << r.boundary_tolerance << ")\n";
  out << "cells predicted " << r.predicted_cells << "  truth " << r.truth_cells << "\n";
  for (const auto& [stage, s] : r.stage_seconds) out << "  " << stage << " " << s << " s\n";
  out.flags(flags);
}

void write_report_kv(std::ostream& out, const EvalReport& r) {
  const auto prec = out.precision(17);
  out << "precision=" << r.precision << "\n"
      << "recall=" << r.recall << "\n"
      << "f_score=" << r.f_score << "\n"
      << "predicted_cells=" << r.predicted_cells << "\n"
      << "truth_cells=" << r.truth_cells << "\n"
      << "predicted_boundary=" << r.predicted_boundary << "\n"
      << "truth_boundary=" << r.truth_boundary << "\n"
      << "boundary_tolerance=" << r.boundary_tolerance << "\n";
  for (const auto& [stage, s] : r.stage_seconds) out << "time." << stage << "=" << s << "\n";
  out.precision(prec);
}

}  // namespace cellseg
