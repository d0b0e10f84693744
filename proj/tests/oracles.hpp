#pragma once

// Slow reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "cellseg/crf.hpp"
#include "cellseg/metrics.hpp"
#include "cellseg/synth.hpp"
#include "cellseg/volume.hpp"

namespace oracle {

using namespace cellseg;

inline double physical_dist(const VoxelCoord& a, const VoxelCoord& b, const Spacing& s) {
  const double dz = (double(a.z) - double(b.z)) * s.z;
  const double dy = (double(a.y) - double(b.y)) * s.y;
  const double dx = (double(a.x) - double(b.x)) * s.x;
  return std::sqrt(dz * dz + dy * dy + dx * dx);
}

/// Distance from every voxel to the nearest nonzero voxel, by exhaustive search.
inline Volume<double> brute_distance(const MaskVolume& m) {
  std::vector<VoxelCoord> sites;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) sites.push_back(m.coord(i));
  Volume<double> out(m.dims(), m.spacing(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const VoxelCoord c = m.coord(i);
    for (const auto& s : sites) out[i] = std::min(out[i], physical_dist(c, s, m.spacing()));
  }
  return out;
}

/// Geodesic dilation iterated to stability: rec = min(dilate26(rec), mask).
inline Volume<double> brute_reconstruct(const Volume<double>& marker, const Volume<double>& mask) {
  Volume<double> rec = marker;
  const Dims& d = rec.dims();
  bool changed = true;
  while (changed) {
    changed = false;
    Volume<double> next = rec;
    for (std::size_t z = 0; z < d.z; ++z)
      for (std::size_t y = 0; y < d.y; ++y)
        for (std::size_t x = 0; x < d.x; ++x) {
          double best = rec.at(z, y, x);
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const long zz = long(z) + dz, yy = long(y) + dy, xx = long(x) + dx;
                if (zz < 0 || yy < 0 || xx < 0 || zz >= long(d.z) || yy >= long(d.y) ||
                    xx >= long(d.x))
                  continue;
                best = std::max(best, rec.at(zz, yy, xx));
              }
          const double v = std::min(best, mask.at(z, y, x));
          if (v != next.at(z, y, x)) {
            next.at(z, y, x) = v;
            changed = true;
          }
        }
    rec = std::move(next);
  }
  return rec;
}

/// Grayscale erosion (min) or dilation (max) over the ellipsoid
/// (dz sz)^2 + (dy sy)^2 + (dx sx)^2 <= r^2, ignoring out-of-volume voxels.
inline ScalarVolume brute_morph(const ScalarVolume& v, double r, bool dilate) {
  const Dims& d = v.dims();
  const Spacing& s = v.spacing();
  ScalarVolume out = v;
  const long rz = long(r / s.z) + 1, ry = long(r / s.y) + 1, rx = long(r / s.x) + 1;
  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        float best = v.at(z, y, x);
        for (long dz = -rz; dz <= rz; ++dz)
          for (long dy = -ry; dy <= ry; ++dy)
            for (long dx = -rx; dx <= rx; ++dx) {
              const double e = (dz * s.z) * (dz * s.z) + (dy * s.y) * (dy * s.y) +
                               (dx * s.x) * (dx * s.x);
              if (e > r * r * (1 + 1e-9)) continue;
              const long zz = long(z) + dz, yy = long(y) + dy, xx = long(x) + dx;
              if (zz < 0 || yy < 0 || xx < 0 || zz >= long(d.z) || yy >= long(d.y) ||
                  xx >= long(d.x))
                continue;
              const float w = v.at(zz, yy, xx);
              best = dilate ? std::max(best, w) : std::min(best, w);
            }
        out.at(z, y, x) = best;
      }
  return out;
}

/// Boundary P/R by scanning every pair of boundary voxels.
struct Prf {
  double precision, recall, f;
};

inline std::vector<VoxelCoord> brute_boundary(const LabelVolume& l) {
  std::vector<VoxelCoord> out;
  const Dims& d = l.dims();
  for (std::size_t i = 0; i < l.size(); ++i) {
    const VoxelCoord c = l.coord(i);
    const long nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
    for (const auto& o : nb) {
      const long z = long(c.z) + o[0], y = long(c.y) + o[1], x = long(c.x) + o[2];
      if (z < 0 || y < 0 || x < 0 || z >= long(d.z) || y >= long(d.y) || x >= long(d.x))
        continue;
      if (l.at(z, y, x) != l[i]) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

inline Prf brute_prf(const LabelVolume& pred, const LabelVolume& truth, int tol) {
  const auto bp = brute_boundary(pred), bt = brute_boundary(truth);
  auto near = [tol](const VoxelCoord& a, const std::vector<VoxelCoord>& set) {
    for (const auto& b : set) {
      const long cz = std::labs(long(a.z) - long(b.z)), cy = std::labs(long(a.y) - long(b.y)),
                 cx = std::labs(long(a.x) - long(b.x));
      if (std::max({cz, cy, cx}) <= tol) return true;
    }
    return false;
  };
  std::size_t hp = 0, ht = 0;
  for (const auto& a : bp) hp += near(a, bt);
  for (const auto& a : bt) ht += near(a, bp);
  Prf r{};
  if (bp.empty() && bt.empty()) return {1, 1, 1};
  r.precision = bp.empty() ? 0.0 : double(hp) / double(bp.size());
  r.recall = bt.empty() ? 0.0 : double(ht) / double(bt.size());
  r.f = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

/// Random label volume with `labels` values drawn per voxel from a few blobs.
inline LabelVolume random_labels(const Dims& d, std::uint32_t labels, std::uint64_t seed,
                                 std::uint64_t stream = 0) {
  CounterRng rng(seed);
  LabelVolume out(d, {}, 1u);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1 + static_cast<std::uint32_t>(rng.bits(stream, i) % labels);
  return out;
}

/// Dense-CRF message written straight from the kernel definition:
/// m_i(l) = sum_{j != i} [w1 exp(-|dp|^2/2sa^2 - dq^2/2sb^2) + w2 exp(-|dp|^2/2sg^2)] Q_j(l).
inline std::vector<double> direct_message(const MarginalField& m, const ScalarVolume& q,
                                          const CrfParams& c) {
  const CandidateSet& cs = m.candidates;
  std::vector<double> out(cs.entry_count(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const VoxelCoord a = q.coord(i);
    for (std::size_t k = cs.begin(i); k < cs.end(i); ++k) {
      const std::uint32_t l = cs.label(k);
      double sum = 0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        if (j == i) continue;
        const double qj = m.value(j, l);
        if (qj == 0) continue;
        const double d = physical_dist(a, q.coord(j), q.spacing());
        const double dq = double(q[i]) - double(q[j]);
        sum += qj * (c.w1 * std::exp(-d * d / (2 * c.sigma_alpha * c.sigma_alpha) -
                                     dq * dq / (2 * c.sigma_beta * c.sigma_beta)) +
                     c.w2 * std::exp(-d * d / (2 * c.sigma_gamma * c.sigma_gamma)));
      }
      out[k] = sum;
    }
  }
  return out;
}

/// Random CRF instance: blob labels, a membrane-like q, random marginals on the
/// candidate sets, and randomized kernel widths.
struct CrfInstance {
  ScalarVolume q;
  LabelVolume x0;
  MarginalField marginals;
  CrfParams params;
};

inline CrfInstance random_crf_instance(std::uint64_t seed, std::size_t max_side = 8,
                                       std::uint32_t min_labels = 2, std::uint32_t max_labels = 4,
                                       bool full_size = false) {
  CounterRng rng(seed);
  std::uint64_t n = 0;
  auto u = [&] { return rng.uniform(7, n++); };
  const Dims d{2 + std::size_t(u() * (max_side - 1)), 2 + std::size_t(u() * (max_side - 1)),
               2 + std::size_t(u() * (max_side - 1))};
  const Dims dims = full_size ? Dims{max_side, max_side, max_side}
                              : Dims{std::min(d.z, max_side), std::min(d.y, max_side),
                                     std::min(d.x, max_side)};
  const Spacing s{0.5 + u() * 1.5, 0.5 + u(), 0.5 + u()};
  const std::uint32_t L = min_labels + std::uint32_t(u() * (max_labels - min_labels + 1) * 0.999999);

  // Labels: nearest of L random centers.
  std::vector<std::array<double, 3>> centers(L);
  for (auto& c : centers) c = {u() * dims.z, u() * dims.y, u() * dims.x};
  CrfInstance inst{ScalarVolume(dims, s), LabelVolume(dims, s, 1u), {}, {}};
  for (std::size_t i = 0; i < inst.x0.size(); ++i) {
    const VoxelCoord c = inst.x0.coord(i);
    double best = 1e300;
    for (std::uint32_t l = 0; l < L; ++l) {
      const double e = std::pow(c.z - centers[l][0], 2) + std::pow(c.y - centers[l][1], 2) +
                       std::pow(c.x - centers[l][2], 2);
      if (e < best) best = e, inst.x0[i] = l + 1;
    }
    inst.q[i] = static_cast<float>(u());
  }
  CrfParams& p = inst.params;
  p.w1 = 0.5 + 5 * u();
  p.w2 = 0.5 + 3 * u();
  p.sigma_alpha = 0.7 + 2.5 * u();
  p.sigma_beta = 0.05 + 0.25 * u();
  p.sigma_gamma = 0.5 + 1.5 * u();
  const CandidateSet cs = u() < 0.3 ? CandidateSet::dense(inst.x0.size(), L)
                                    : build_candidates(inst.x0, p.effective_candidate_radius());
  std::vector<double> unary(cs.entry_count());
  for (double& x : unary) x = 3 * u();
  inst.marginals = marginals_from_unary(cs, unary);
  return inst;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace oracle
