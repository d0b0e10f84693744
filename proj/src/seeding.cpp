#include "cellseg/seeding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>

#include "cellseg/diagnostics.hpp"

namespace cellseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::array<std::uint64_t, 256> histogram256(const ScalarVolume& q) {
  std::array<std::uint64_t, 256> h{};
  for (float v : q.data()) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    ++h[std::min(255, static_cast<int>(std::floor(c * 256.0)))];
  }
  return h;
}

double between_class(const std::array<std::uint64_t, 256>& h, int k) {
  double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
  for (int b = 0; b < 256; ++b) {
    const double c = static_cast<double>(h[b]);
    const double center = (b + 0.5) / 256.0;
    if (b < k) {
      n0 += c;
      s0 += c * center;
    } else {
      n1 += c;
      s1 += c * center;
    }
  }
  if (n0 == 0 || n1 == 0) return 0.0;
  const double n = n0 + n1;
  const double diff = s0 / n0 - s1 / n1;
  return (n0 / n) * (n1 / n) * diff * diff;
}

// One 1D lower-envelope pass: out[i] = min_j (s^2 (i-j)^2 + f[j]).
void envelope_1d(const double* f, double* out, long n, double s2, std::vector<long>& v,
                 std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  long k = -1;
  for (long q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + s2 * static_cast<double>(q) * q;
    while (k >= 0) {
      const long p = v[k];
      const double fp = f[p] + s2 * static_cast<double>(p) * p;
      const double x = (fq - fp) / (2.0 * s2 * static_cast<double>(q - p));
      if (x <= z[k]) {
        --k;
      } else {
        ++k;
        v[k] = q;
        z[k] = x;
        z[k + 1] = kInf;
        break;
      }
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
    }
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  long j = 0;
  for (long q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double dq = static_cast<double>(q - v[j]);
    out[q] = s2 * dq * dq + f[v[j]];
  }
}

void envelope_axis(std::vector<double>& data, const Dims& d, int axis, double spacing) {
  const long n = static_cast<long>(axis == 0 ? d.z : axis == 1 ? d.y : d.x);
  const long stride = static_cast<long>(axis == 0 ? d.y * d.x : axis == 1 ? d.x : 1);
  const long lines = static_cast<long>(d.count()) / n;
  const long X = static_cast<long>(d.x);
  const double s2 = spacing * spacing;
#pragma omp parallel
  {
    std::vector<double> in(n), out(n), zbuf;
    std::vector<long> vbuf;
#pragma omp for schedule(static)
    for (long l = 0; l < lines; ++l) {
      long base;
      if (axis == 2) {
        base = l * n;
      } else if (axis == 1) {
        base = (l / X) * n * X + l % X;
      } else {
        base = l;
      }
      for (long i = 0; i < n; ++i) in[i] = data[base + i * stride];
      envelope_1d(in.data(), out.data(), n, s2, vbuf, zbuf);
      for (long i = 0; i < n; ++i) data[base + i * stride] = out[i];
    }
  }
}

struct Offset {
  int dz, dy, dx;
};

std::vector<Offset> offsets26() {
  std::vector<Offset> o;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dz || dy || dx) o.push_back({dz, dy, dx});
  return o;
}

// Calls fn(neighbor_index) for every in-bounds neighbor in `offs`.
template <class Fn>
inline void for_neighbors(const Dims& d, std::size_t z, std::size_t y, std::size_t x,
                          const std::vector<Offset>& offs, Fn&& fn) {
  for (const auto& o : offs) {
    const long zz = static_cast<long>(z) + o.dz;
    const long yy = static_cast<long>(y) + o.dy;
    const long xx = static_cast<long>(x) + o.dx;
    if (zz < 0 || yy < 0 || xx < 0 || zz >= static_cast<long>(d.z) ||
        yy >= static_cast<long>(d.y) || xx >= static_cast<long>(d.x))
      continue;
    fn((static_cast<std::size_t>(zz) * d.y + static_cast<std::size_t>(yy)) * d.x +
       static_cast<std::size_t>(xx));
  }
}

}  // namespace

double otsu_between_class_variance(const ScalarVolume& q, int k) {
  return between_class(histogram256(q), k);
}

double otsu_threshold(const ScalarVolume& q) {
  const auto h = histogram256(q);
  if (std::count_if(h.begin(), h.end(), [](std::uint64_t c) { return c > 0; }) < 2) {
    throw DataError("otsu threshold: input is constant at 256-bin resolution");
  }
  int best_k = 1;
  double best = -1.0;
  for (int k = 1; k < 256; ++k) {
    const double s = between_class(h, k);
    if (s > best) {
      best = s;
      best_k = k;
    }
  }
  return best_k / 256.0;
}

MaskVolume membrane_mask(const ScalarVolume& q, double threshold) {
  MaskVolume m(q.dims(), q.spacing(), 0);
  for (std::size_t i = 0; i < q.size(); ++i) m[i] = q[i] >= threshold ? 1 : 0;
  return m;
}

Volume<double> squared_distance_transform(const MaskVolume& sites) {
  Volume<double> out(sites.dims(), sites.spacing(), kInf);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i]) out[i] = 0.0;
  }
  const Dims& d = sites.dims();
  const Spacing& s = sites.spacing();
  envelope_axis(out.storage(), d, 2, s.x);
  envelope_axis(out.storage(), d, 1, s.y);
  envelope_axis(out.storage(), d, 0, s.z);
  return out;
}

DistanceMap distance_transform(const MaskVolume& membrane) {
  const auto members = std::count_if(membrane.data().begin(), membrane.data().end(),
                                     [](std::uint8_t m) { return m != 0; });
  if (members == 0) throw DataError("distance transform: mask has no membrane voxels");
  if (static_cast<std::size_t>(members) == membrane.size()) {
    throw DataError("distance transform: mask is entirely membrane");
  }
  DistanceMap d = squared_distance_transform(membrane);
  for (double& v : d.storage()) v = std::sqrt(v);
  return d;
}

Volume<double> reconstruct_by_dilation(const Volume<double>& marker, const Volume<double>& mask) {
  require_same_dims(marker, mask, "reconstruction");
  const Dims& d = mask.dims();
  Volume<double> rec = marker;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i] > mask[i]) throw DataError("reconstruction: marker must not exceed mask");
  }

  const auto all = offsets26();
  std::vector<Offset> before, after;  // raster predecessors / successors
  for (const auto& o : all) {
    const long lin = (static_cast<long>(o.dz) * 3 + o.dy) * 3 + o.dx;
    (lin < 0 ? before : after).push_back(o);
  }

  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        const std::size_t p = rec.index(z, y, x);
        double m = rec[p];
        for_neighbors(d, z, y, x, before, [&](std::size_t n) { m = std::max(m, rec[n]); });
        rec[p] = std::min(m, mask[p]);
      }

  std::deque<std::size_t> fifo;
  for (std::size_t z = d.z; z-- > 0;)
    for (std::size_t y = d.y; y-- > 0;)
      for (std::size_t x = d.x; x-- > 0;) {
        const std::size_t p = rec.index(z, y, x);
        double m = rec[p];
        for_neighbors(d, z, y, x, after, [&](std::size_t n) { m = std::max(m, rec[n]); });
        rec[p] = std::min(m, mask[p]);
        bool push = false;
        for_neighbors(d, z, y, x, after, [&](std::size_t n) {
          if (rec[n] < rec[p] && rec[n] < mask[n]) push = true;
        });
        if (push) fifo.push_back(p);
      }

  while (!fifo.empty()) {
    const std::size_t p = fifo.front();
    fifo.pop_front();
    const VoxelCoord c = rec.coord(p);
    for_neighbors(d, c.z, c.y, c.x, all, [&](std::size_t n) {
      if (rec[n] < rec[p] && mask[n] != rec[n]) {
        rec[n] = std::min(rec[p], mask[n]);
        fifo.push_back(n);
      }
    });
  }
  return rec;
}

Volume<double> h_maxima_transform(const DistanceMap& d, double h) {
  if (!(h > 0.0)) throw ParameterError("H must be > 0");
  Volume<double> marker = d;
  for (double& v : marker.storage()) v -= h;
  return reconstruct_by_dilation(marker, d);
}

SeedSet h_maxima_seeds(const DistanceMap& d, double h) {
  const Volume<double> rec = h_maxima_transform(d, h);
  const Dims& dims = d.dims();
  const auto offs = offsets26();

  SeedSet out;
  out.h_value = h;
  std::vector<std::uint8_t> visited(rec.size(), 0);
  std::vector<std::size_t> component;
  std::deque<std::size_t> frontier;
  for (std::size_t start = 0; start < rec.size(); ++start) {
    if (visited[start]) continue;
    const double level = rec[start];
    bool is_max = true;
    component.clear();
    frontier.push_back(start);
    visited[start] = 1;
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      component.push_back(p);
      const VoxelCoord c = rec.coord(p);
      for_neighbors(dims, c.z, c.y, c.x, offs, [&](std::size_t n) {
        if (rec[n] > level) {
          is_max = false;
        } else if (rec[n] == level && !visited[n]) {
          visited[n] = 1;
          frontier.push_back(n);
        }
      });
    }
    if (is_max && level > 0.0) {
      std::sort(component.begin(), component.end());
      out.seeds.push_back({static_cast<std::uint32_t>(out.seeds.size() + 1), component});
    }
  }
  if (out.seeds.empty()) warn("H-maxima seeding produced no seeds (H >= maximum distance?)");
  return out;
}

LabelVolume SeedSet::to_labels(const Dims& dims, const Spacing& spacing) const {
  LabelVolume labels(dims, spacing, 0u);
  for (const auto& s : seeds) {
    for (std::size_t v : s.voxels) labels[v] = s.label;
  }
  return labels;
}

SeedSet seeds_from_labels(const LabelVolume& labels) {
  const std::uint32_t L = num_labels(labels);
  std::vector<std::vector<std::size_t>> regions(L + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) regions[labels[i]].push_back(i);
  }
  SeedSet out;
  std::uint32_t next = 0;
  for (std::uint32_t l = 1; l <= L; ++l) {
    if (!regions[l].empty()) out.seeds.push_back({++next, std::move(regions[l])});
  }
  return out;
}

SeedingResult generate_seeds(const ScalarVolume& q, double h) {
  SeedingResult r;
  r.threshold = otsu_threshold(q);
  r.distance = distance_transform(membrane_mask(q, r.threshold));
  r.seeds = h_maxima_seeds(r.distance, h);
  r.seeds.threshold = r.threshold;
  return r;
}

}  // namespace cellseg
