#include "cellseg/synth.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "cellseg/preprocess.hpp"
#include "cellseg/seeding.hpp"

namespace cellseg {

namespace {

constexpr std::uint64_t kStreamCenters = 1;
constexpr std::uint64_t kStreamProtrusion = 2;
constexpr std::uint64_t kStreamGaps = 3;
constexpr std::uint64_t kStreamNoise = 4;

std::uint64_t splitmix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dz = a[0] - b[0], dy = a[1] - b[1], dx = a[2] - b[2];
  return dz * dz + dy * dy + dx * dx;
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t counter) const noexcept {
  return splitmix(splitmix(splitmix(seed_) ^ stream) ^ counter);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t counter) const noexcept {
  return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t stream, std::uint64_t counter) const noexcept {
  const double u1 = 1.0 - uniform(stream, 2 * counter);  // (0, 1]
  const double u2 = uniform(stream, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void FoamParams::validate() const {
  validate_geometry(dims, spacing);
  if (n_cells < 1) throw ParameterError("n_cells must be >= 1");
  if (!(membrane_width >= spacing.min())) {
    throw ParameterError("membrane_width must be at least one voxel of the finest axis");
  }
  if (!std::isfinite(protrusion_radius)) throw ParameterError("protrusion_radius must be finite");
}

void DegradeParams::validate() const {
  for (double v : {noise_sigma, attenuation_per_z, gap_fraction, gap_radius}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("degrade parameters must be >= 0");
  }
  if (gap_fraction > 1.0) throw ParameterError("gap_fraction must be <= 1");
}

ScalarVolume membrane_signal(const LabelVolume& labels, double membrane_width) {
  const Dims& d = labels.dims();
  MaskVolume boundary(d, labels.spacing(), 0);
  bool any = false;
  for (std::size_t z = 0; z < d.z; ++z)
    for (std::size_t y = 0; y < d.y; ++y)
      for (std::size_t x = 0; x < d.x; ++x) {
        const std::uint32_t l = labels.at(z, y, x);
        const bool edge = (x + 1 < d.x && labels.at(z, y, x + 1) != l) ||
                          (x > 0 && labels.at(z, y, x - 1) != l) ||
                          (y + 1 < d.y && labels.at(z, y + 1, x) != l) ||
                          (y > 0 && labels.at(z, y - 1, x) != l) ||
                          (z + 1 < d.z && labels.at(z + 1, y, x) != l) ||
                          (z > 0 && labels.at(z - 1, y, x) != l);
        boundary.at(z, y, x) = edge;
        any = any || edge;
      }
  ScalarVolume signal(d, labels.spacing(), 0.0f);
  if (!any) return signal;

  // Boundary voxels straddle the interface, so they sit half a voxel from it.
  const double reach = std::max(0.0, 0.5 * membrane_width - 0.5 * labels.spacing().min());
  const Volume<double> d2 = squared_distance_transform(boundary);
  const double r2 = reach * reach * (1.0 + 1e-12);
  for (std::size_t i = 0; i < signal.size(); ++i) signal[i] = d2[i] <= r2 ? 1.0f : 0.0f;

  signal = gaussian_smooth(signal, 0.5 * labels.spacing().min());
  float hi = 0.0f;
  for (float v : signal.data()) hi = std::max(hi, v);
  if (hi > 0.0f) {
    for (float& v : signal.storage()) v = std::clamp(v / hi, 0.0f, 1.0f);
  }
  return signal;
}

namespace {

LabelVolume voronoi(Dims dims, Spacing spacing, const std::vector<std::array<double, 3>>& centers) {
  LabelVolume labels(dims, spacing, 0u);
  const long n = static_cast<long>(labels.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto p = labels.physical(labels.coord(i));
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t label = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = dist2(p, centers[c]);
      if (d < best) best = d, label = static_cast<std::uint32_t>(c + 1);
    }
    labels[i] = label;
  }
  return labels;
}

void add_protrusions(LabelVolume& labels, const FoamParams& params, double radius,
                     const CounterRng& rng) {
  const Dims& d = labels.dims();
  std::vector<std::size_t> sizes(params.n_cells + 1, 0);
  for (std::uint32_t l : labels.data()) ++sizes[l];
  const std::size_t attempts = 1000 * static_cast<std::size_t>(params.protrusions);
  std::uint32_t placed = 0;
  for (std::size_t k = 0; k < attempts && placed < params.protrusions; ++k) {
    const auto v = static_cast<std::size_t>(rng.bits(kStreamProtrusion, k) % labels.size());
    const VoxelCoord c = labels.coord(v);
    const std::uint32_t a = labels[v];
    std::uint32_t b = 0;
    if (c.x + 1 < d.x && labels.at(c.z, c.y, c.x + 1) != a) b = labels.at(c.z, c.y, c.x + 1);
    else if (c.y + 1 < d.y && labels.at(c.z, c.y + 1, c.x) != a) b = labels.at(c.z, c.y + 1, c.x);
    else if (c.z + 1 < d.z && labels.at(c.z + 1, c.y, c.x) != a) b = labels.at(c.z + 1, c.y, c.x);
    if (b == 0) continue;

    const auto center = labels.physical(c);
    const Spacing& s = labels.spacing();
    const auto rz = static_cast<long>(radius / s.z), ry = static_cast<long>(radius / s.y),
               rx = static_cast<long>(radius / s.x);
    std::vector<std::size_t> taken;
    for (long dz = -rz; dz <= rz; ++dz)
      for (long dy = -ry; dy <= ry; ++dy)
        for (long dx = -rx; dx <= rx; ++dx) {
          const long z = static_cast<long>(c.z) + dz, y = static_cast<long>(c.y) + dy,
                     x = static_cast<long>(c.x) + dx;
          if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(d.z) ||
              y >= static_cast<long>(d.y) || x >= static_cast<long>(d.x)) {
            continue;
          }
          const std::size_t i = labels.index(z, y, x);
          if (labels[i] == b && dist2(labels.physical(labels.coord(i)), center) <= radius * radius) {
            taken.push_back(i);
          }
        }
    // Keep most of the neighbor so the bump stays a surface feature.
    if (taken.empty() || 4 * taken.size() >= sizes[b]) continue;
    for (std::size_t i : taken) labels[i] = a;
    sizes[b] -= taken.size();
    sizes[a] += taken.size();
    ++placed;
  }
}

}  // namespace

Foam make_foam_from_centers(Dims dims, Spacing spacing,
                            const std::vector<std::array<double, 3>>& centers,
                            double membrane_width) {
  validate_geometry(dims, spacing);
  if (centers.empty()) throw ParameterError("at least one center is required");
  Foam foam;
  foam.centers = centers;
  foam.truth = voronoi(dims, spacing, centers);
  foam.raw = membrane_signal(foam.truth, membrane_width);
  double closest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      closest = std::min(closest, std::sqrt(dist2(centers[i], centers[j])));
  foam.min_center_distance = closest;
  return foam;
}

Foam make_foam(const FoamParams& params) {
  params.validate();
  const Dims& d = params.dims;
  const Spacing& s = params.spacing;
  const double volume = static_cast<double>(d.z) * s.z * static_cast<double>(d.y) * s.y *
                        static_cast<double>(d.x) * s.x;
  const double min_dist = 0.6 * std::cbrt(volume / params.n_cells);
  if (params.n_cells > d.count()) throw DataError("impossible packing: more cells than voxels");

  // Dart throwing on voxel centers, so every cell keeps at least its center voxel.
  const CounterRng rng(params.seed);
  std::vector<std::array<double, 3>> centers;
  const std::size_t attempts = 1000 * static_cast<std::size_t>(params.n_cells);
  for (std::size_t k = 0; k < attempts && centers.size() < params.n_cells; ++k) {
    const auto v = static_cast<std::size_t>(rng.bits(kStreamCenters, k) % d.count());
    const std::size_t x = v % d.x, y = (v / d.x) % d.y, z = v / (d.x * d.y);
    const std::array<double, 3> p{static_cast<double>(z) * s.z, static_cast<double>(y) * s.y,
                                  static_cast<double>(x) * s.x};
    bool ok = true;
    for (const auto& c : centers) {
      if (dist2(c, p) < min_dist * min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) centers.push_back(p);
  }
  if (centers.size() < params.n_cells) {
    throw DataError("impossible packing: placed " + std::to_string(centers.size()) + " of " +
                    std::to_string(params.n_cells) + " centers");
  }

  Foam foam;
  foam.centers = std::move(centers);
  foam.min_center_distance = min_dist;
  foam.truth = voronoi(d, s, foam.centers);
  if (params.protrusions > 0) {
    const double radius =
        params.protrusion_radius > 0 ? params.protrusion_radius : 0.25 * min_dist;
    add_protrusions(foam.truth, params, radius, rng);
  }
  foam.raw = membrane_signal(foam.truth, params.membrane_width);
  return foam;
}

Foam make_foam(Dims dims, Spacing spacing, std::uint32_t n_cells, double membrane_width,
               std::uint64_t seed) {
  FoamParams p;
  p.dims = dims, p.spacing = spacing, p.n_cells = n_cells, p.membrane_width = membrane_width;
  p.seed = seed;
  return make_foam(p);
}

ScalarVolume degrade(const ScalarVolume& raw, const DegradeParams& params) {
  params.validate();
  ScalarVolume out = raw;
  if (params.noise_sigma == 0 && params.attenuation_per_z == 0 && params.gap_fraction == 0) {
    return out;
  }
  const CounterRng rng(params.seed);
  const Dims& d = raw.dims();

  if (params.gap_fraction > 0) {
    std::size_t membrane = 0;
    for (float v : raw.data()) membrane += v >= 0.5f;
    const auto target =
        static_cast<std::size_t>(std::ceil(params.gap_fraction * static_cast<double>(membrane)));
    const Spacing& s = raw.spacing();
    const double radius = params.gap_radius * s.min();
    const auto rz = static_cast<long>(radius / s.z), ry = static_cast<long>(radius / s.y),
               rx = static_cast<long>(radius / s.x);
    std::size_t erased = 0;
    const std::size_t attempts = 100 * raw.size();
    for (std::size_t k = 0; k < attempts && erased < target; ++k) {
      const auto v = static_cast<std::size_t>(rng.bits(kStreamGaps, k) % raw.size());
      if (!(raw[v] >= 0.5f) || out[v] == 0.0f) continue;
      const VoxelCoord c = raw.coord(v);
      for (long dz = -rz; dz <= rz; ++dz)
        for (long dy = -ry; dy <= ry; ++dy)
          for (long dx = -rx; dx <= rx; ++dx) {
            const long z = static_cast<long>(c.z) + dz, y = static_cast<long>(c.y) + dy,
                       x = static_cast<long>(c.x) + dx;
            if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(d.z) ||
                y >= static_cast<long>(d.y) || x >= static_cast<long>(d.x)) {
              continue;
            }
            const double pz = dz * s.z, py = dy * s.y, px = dx * s.x;
            if (pz * pz + py * py + px * px > radius * radius) continue;
            const std::size_t i = raw.index(z, y, x);
            if (out[i] == 0.0f) continue;
            if (raw[i] >= 0.5f) ++erased;
            out[i] = 0.0f;
          }
    }
  }

  const long n = static_cast<long>(out.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double v = out[i];
    if (params.attenuation_per_z > 0) {
      v *= std::exp(-params.attenuation_per_z * static_cast<double>(i / (d.x * d.y)));
    }
    if (params.noise_sigma > 0) {
      v += params.noise_sigma * rng.normal(kStreamNoise, static_cast<std::uint64_t>(i));
      v = std::clamp(v, 0.0, 1.0);
    }
    out[i] = static_cast<float>(v);
  }
  return out;
}

ScalarVolume degrade(const ScalarVolume& raw, double noise_sigma, double attenuation_per_z,
                     double gap_fraction, std::uint64_t seed) {
  DegradeParams p;
  p.noise_sigma = noise_sigma, p.attenuation_per_z = attenuation_per_z;
  p.gap_fraction = gap_fraction, p.seed = seed;
  return degrade(raw, p);
}

GapCount count_gaps(const ScalarVolume& raw, const ScalarVolume& degraded) {
  require_same_dims(raw, degraded, "count_gaps");
  GapCount g;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] >= 0.5f) {
      ++g.membrane;
      g.erased += degraded[i] == 0.0f;
    }
  }
  return g;
}

void write_manifest(const std::filesystem::path& path, const FoamParams& foam,
                    const DegradeParams& degrade) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out.precision(17);
  out << "dims = " << foam.dims.z << " " << foam.dims.y << " " << foam.dims.x << "\n"
      << "spacing = " << foam.spacing.z << " " << foam.spacing.y << " " << foam.spacing.x << "\n"
      << "n_cells = " << foam.n_cells << "\n"
      << "membrane_width = " << foam.membrane_width << "\n"
      << "seed = " << foam.seed << "\n"
      << "protrusions = " << foam.protrusions << "\n"
      << "protrusion_radius = " << foam.protrusion_radius << "\n"
      << "noise_sigma = " << degrade.noise_sigma << "\n"
      << "attenuation_per_z = " << degrade.attenuation_per_z << "\n"
      << "gap_fraction = " << degrade.gap_fraction << "\n"
      << "gap_radius = " << degrade.gap_radius << "\n"
      << "degrade_seed = " << degrade.seed << "\n";
  if (!out) throw DataError("cannot write manifest: " + path.string());
}

}  // namespace cellseg
