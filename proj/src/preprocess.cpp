#include "cellseg/preprocess.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>

#include "cellseg/diagnostics.hpp"

namespace cellseg {
namespace {

// Ellipsoid support decomposed into x-runs: for every (dz, dy) the half-width in x.
struct RunOffset {
  long dz;
  long dy;
  long half_width;
};

std::vector<RunOffset> ellipsoid_runs(const Spacing& s, double radius) {
  const long rz = static_cast<long>(std::floor(radius / s.z + 1e-9));
  const long ry = static_cast<long>(std::floor(radius / s.y + 1e-9));
  std::vector<RunOffset> runs;
  for (long dz = -rz; dz <= rz; ++dz) {
    for (long dy = -ry; dy <= ry; ++dy) {
      const double fz = dz * s.z / radius;
      const double fy = dy * s.y / radius;
      const double rest = 1.0 - fz * fz - fy * fy;
      if (rest < -1e-12) continue;
      const double wx = radius * std::sqrt(std::max(rest, 0.0)) / s.x;
      runs.push_back({dz, dy, static_cast<long>(std::floor(wx + 1e-9))});
    }
  }
  return runs;
}

// Running min/max over [x-w, x+w] clipped to the row (van Herk / Gil-Werman).
template <class Op>
void row_filter(const float* in, float* out, long n, long w, Op op, float identity,
                std::vector<float>& fwd, std::vector<float>& bwd) {
  if (w == 0) {
    std::copy(in, in + n, out);
    return;
  }
  const long block = 2 * w + 1;
  const long padded = ((n + 2 * w + block - 1) / block) * block;
  fwd.assign(padded, identity);
  bwd.assign(padded, identity);
  auto src = [&](long i) { return (i >= w && i - w < n) ? in[i - w] : identity; };
  for (long b = 0; b < padded; b += block) {
    fwd[b] = src(b);
    for (long i = b + 1; i < b + block; ++i) fwd[i] = op(fwd[i - 1], src(i));
    bwd[b + block - 1] = src(b + block - 1);
    for (long i = b + block - 2; i >= b; --i) bwd[i] = op(bwd[i + 1], src(i));
  }
  // Window in padded coordinates for output x is [x, x + 2w].
  for (long x = 0; x < n; ++x) out[x] = op(bwd[x], fwd[x + 2 * w]);
}

template <class Op>
ScalarVolume morph_ellipsoid(const ScalarVolume& v, double radius, Op op, float identity) {
  const Dims d = v.dims();
  const auto runs = ellipsoid_runs(v.spacing(), radius);
  std::map<long, std::vector<float>> filtered;
  for (const auto& r : runs) filtered.try_emplace(r.half_width);

  const long X = static_cast<long>(d.x);
  for (auto& [w, buf] : filtered) {
    buf.resize(v.size());
    const long width = w;
    auto& dst = buf;
#pragma omp parallel
    {
      std::vector<float> fwd, bwd;
#pragma omp for schedule(static)
      for (long row = 0; row < static_cast<long>(d.z * d.y); ++row) {
        row_filter(v.data().data() + row * X, dst.data() + row * X, X, width, op, identity, fwd,
                   bwd);
      }
    }
  }

  std::vector<const float*> run_src;
  for (const auto& r : runs) run_src.push_back(filtered.at(r.half_width).data());

  ScalarVolume out(d, v.spacing(), identity);
  const long Z = static_cast<long>(d.z), Y = static_cast<long>(d.y);
#pragma omp parallel for schedule(static)
  for (long z = 0; z < Z; ++z) {
    for (long y = 0; y < Y; ++y) {
      float* dst = out.data().data() + (z * Y + y) * X;
      for (std::size_t k = 0; k < runs.size(); ++k) {
        const long zz = z + runs[k].dz, yy = y + runs[k].dy;
        if (zz < 0 || zz >= Z || yy < 0 || yy >= Y) continue;
        const float* src = run_src[k] + (zz * Y + yy) * X;
        for (long x = 0; x < X; ++x) dst[x] = op(dst[x], src[x]);
      }
    }
  }
  return out;
}

bool single_voxel_element(const Spacing& s, double radius) {
  return radius < s.z && radius < s.y && radius < s.x;
}

std::vector<double> gaussian_taps(double sigma_vox) {
  const long radius = static_cast<long>(std::ceil(4.0 * sigma_vox));
  std::vector<double> taps(2 * radius + 1);
  for (long t = -radius; t <= radius; ++t) {
    taps[t + radius] = std::exp(-0.5 * (t / sigma_vox) * (t / sigma_vox));
  }
  return taps;
}

// Normalized Gaussian along one axis, renormalized where taps leave the volume.
void smooth_axis(std::vector<double>& data, const Dims& d, int axis, double sigma_vox) {
  if (sigma_vox <= 0.0) return;
  const auto taps = gaussian_taps(sigma_vox);
  const long radius = static_cast<long>(taps.size() / 2);
  const long n = static_cast<long>(axis == 0 ? d.z : axis == 1 ? d.y : d.x);
  const long stride = static_cast<long>(axis == 0 ? d.y * d.x : axis == 1 ? d.x : 1);
  const long lines = static_cast<long>(d.count()) / n;
#pragma omp parallel
  {
    std::vector<double> line(n);
#pragma omp for schedule(static)
    for (long l = 0; l < lines; ++l) {
      long base;
      if (axis == 2) {
        base = l * n;
      } else if (axis == 1) {
        base = (l / static_cast<long>(d.x)) * n * static_cast<long>(d.x) + l % static_cast<long>(d.x);
      } else {
        base = l;
      }
      for (long i = 0; i < n; ++i) line[i] = data[base + i * stride];
      for (long i = 0; i < n; ++i) {
        double acc = 0.0, norm = 0.0;
        const long lo = std::max(-radius, -i), hi = std::min(radius, n - 1 - i);
        for (long t = lo; t <= hi; ++t) {
          acc += taps[t + radius] * line[i + t];
          norm += taps[t + radius];
        }
        data[base + i * stride] = acc / norm;
      }
    }
  }
}

}  // namespace

void PreprocessParams::validate() const {
  if (!(ball_radius > 0.0)) throw ParameterError("ball_radius must be > 0");
  if (target_spacing) {
    for (double s : {target_spacing->z, target_spacing->y, target_spacing->x}) {
      if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("target spacing must be > 0");
    }
  }
  if (reference_cdf) validate_cdf(*reference_cdf);
}

ScalarVolume erode_ellipsoid(const ScalarVolume& v, double radius_um) {
  return morph_ellipsoid(
      v, radius_um, [](float a, float b) { return std::min(a, b); },
      std::numeric_limits<float>::infinity());
}

ScalarVolume dilate_ellipsoid(const ScalarVolume& v, double radius_um) {
  return morph_ellipsoid(
      v, radius_um, [](float a, float b) { return std::max(a, b); },
      -std::numeric_limits<float>::infinity());
}

ScalarVolume rolling_ball_subtract(const ScalarVolume& v, double radius_um) {
  if (!(radius_um > 0.0)) throw ParameterError("rolling ball radius must be > 0");
  if (single_voxel_element(v.spacing(), radius_um)) {
    warn("rolling ball radius is below one voxel on every axis; background equals the image");
  }
  const ScalarVolume background = dilate_ellipsoid(erode_ellipsoid(v, radius_um), radius_um);
  ScalarVolume out(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::clamp(v[i] - background[i], 0.0f, 1.0f);
  }
  return out;
}

ScalarVolume resample(const ScalarVolume& v, const Spacing& target) {
  const Spacing& s = v.spacing();
  const Dims& d = v.dims();
  for (double t : {target.z, target.y, target.x}) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ParameterError("target spacing must be > 0");
  }
  auto new_dim = [](std::size_t n, double old_s, double new_s) {
    const double r = std::round(static_cast<double>(n) * old_s / new_s);
    if (r < 1.0) throw DataError("resampling produces an empty axis");
    return static_cast<std::size_t>(r);
  };
  const Dims nd{new_dim(d.z, s.z, target.z), new_dim(d.y, s.y, target.y),
                new_dim(d.x, s.x, target.x)};
  if (nd == d && target == s) return v;

  // Per-axis source position: lower index and fractional weight.
  struct Sample {
    std::size_t i0, i1;
    double t;
  };
  auto axis_samples = [](std::size_t n_new, std::size_t n_old, double new_s, double old_s) {
    std::vector<Sample> out(n_new);
    for (std::size_t i = 0; i < n_new; ++i) {
      double u = static_cast<double>(i) * new_s / old_s;
      u = std::clamp(u, 0.0, static_cast<double>(n_old - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(u));
      const std::size_t i1 = std::min(i0 + 1, n_old - 1);
      out[i] = {i0, i1, u - static_cast<double>(i0)};
    }
    return out;
  };
  const auto sz = axis_samples(nd.z, d.z, target.z, s.z);
  const auto sy = axis_samples(nd.y, d.y, target.y, s.y);
  const auto sx = axis_samples(nd.x, d.x, target.x, s.x);

  ScalarVolume out(nd, target);
  auto lerp = [](double a, double b, double t) { return t == 0.0 ? a : a + (b - a) * t; };
#pragma omp parallel for schedule(static)
  for (long z = 0; z < static_cast<long>(nd.z); ++z) {
    const auto& a = sz[z];
    for (std::size_t y = 0; y < nd.y; ++y) {
      const auto& b = sy[y];
      for (std::size_t x = 0; x < nd.x; ++x) {
        const auto& c = sx[x];
        auto at = [&](std::size_t zz, std::size_t yy, std::size_t xx) {
          return static_cast<double>(v.at(zz, yy, xx));
        };
        const double c00 = lerp(at(a.i0, b.i0, c.i0), at(a.i0, b.i0, c.i1), c.t);
        const double c01 = lerp(at(a.i0, b.i1, c.i0), at(a.i0, b.i1, c.i1), c.t);
        const double c10 = lerp(at(a.i1, b.i0, c.i0), at(a.i1, b.i0, c.i1), c.t);
        const double c11 = lerp(at(a.i1, b.i1, c.i0), at(a.i1, b.i1, c.i1), c.t);
        const double r = lerp(lerp(c00, c01, b.t), lerp(c10, c11, b.t), a.t);
        out.at(z, y, x) = static_cast<float>(r);
      }
    }
  }
  return out;
}

float quantize256(float v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0) / 255.0);
}

namespace {

int level_of(float v) {
  return static_cast<int>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

}  // namespace

Cdf256 intensity_cdf(const ScalarVolume& v) {
  std::array<std::uint64_t, 256> counts{};
  for (float f : v.data()) ++counts[level_of(f)];
  Cdf256 cdf{};
  std::uint64_t acc = 0;
  for (int k = 0; k < 256; ++k) {
    acc += counts[k];
    cdf[k] = static_cast<double>(acc) / static_cast<double>(v.size());
  }
  cdf[255] = 1.0;
  return cdf;
}

void validate_cdf(const Cdf256& cdf) {
  for (int k = 0; k < 256; ++k) {
    if (!std::isfinite(cdf[k]) || cdf[k] < 0.0 || cdf[k] > 1.0 + 1e-12) {
      throw ParameterError("reference CDF values must lie in [0, 1]");
    }
    if (k > 0 && cdf[k] < cdf[k - 1]) throw ParameterError("reference CDF must be non-decreasing");
  }
  if (std::abs(cdf[255] - 1.0) > 1e-9) throw ParameterError("reference CDF must end at 1");
}

ScalarVolume histogram_match(const ScalarVolume& v, const Cdf256& reference) {
  validate_cdf(reference);
  const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
  if (*lo == *hi) {
    warn("histogram matching skipped: input has zero variance");
    return v;
  }
  const Cdf256 source = intensity_cdf(v);
  std::array<float, 256> lut{};
  for (int k = 0; k < 256; ++k) {
    int j = 0;
    while (j < 255 && reference[j] < source[k] - 1e-12) ++j;
    lut[k] = static_cast<float>(j / 255.0);
  }
  ScalarVolume out(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = lut[level_of(v[i])];
  return out;
}

Cdf256 read_reference_cdf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open reference histogram " + path.string());
  std::array<unsigned char, 256 * 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()) || in.peek() != EOF) {
    throw DataError("reference histogram must hold exactly 256 f64 values");
  }
  Cdf256 cdf{};
  for (int k = 0; k < 256; ++k) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(bytes[k * 8 + b]) << (8 * b);
    cdf[k] = std::bit_cast<double>(u);
  }
  try {
    validate_cdf(cdf);
  } catch (const ParameterError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return cdf;
}

void write_reference_cdf(const Cdf256& cdf, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create " + path.string());
  for (double c : cdf) {
    const auto u = std::bit_cast<std::uint64_t>(c);
    for (int b = 0; b < 8; ++b) out.put(static_cast<char>((u >> (8 * b)) & 0xFF));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

ScalarVolume gaussian_smooth(const ScalarVolume& v, double sigma_um) {
  if (!(sigma_um > 0.0)) return v;
  std::vector<double> work(v.data().begin(), v.data().end());
  const Spacing& s = v.spacing();
  smooth_axis(work, v.dims(), 0, v.dims().z > 1 ? sigma_um / s.z : 0.0);
  smooth_axis(work, v.dims(), 1, v.dims().y > 1 ? sigma_um / s.y : 0.0);
  smooth_axis(work, v.dims(), 2, v.dims().x > 1 ? sigma_um / s.x : 0.0);
  ScalarVolume out(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(work[i]);
  return out;
}

ScalarVolume fallback_probmap(const ScalarVolume& v, double smooth_sigma_um) {
  const ScalarVolume smooth = gaussian_smooth(v, smooth_sigma_um);
  const auto [lo_it, hi_it] = std::minmax_element(smooth.data().begin(), smooth.data().end());
  const double lo = *lo_it, hi = *hi_it;
  ScalarVolume out(v.dims(), v.spacing(), 0.0f);
  if (!(hi - lo > 1e-12)) {
    warn("fallback probability map: constant input, emitting all-zero map");
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::clamp(static_cast<float>((smooth[i] - lo) / (hi - lo)), 0.0f, 1.0f);
  }
  return out;
}

ScalarVolume preprocess(const ScalarVolume& v, const PreprocessParams& params) {
  params.validate();
  ScalarVolume out = params.subtract_background ? rolling_ball_subtract(v, params.ball_radius) : v;
  if (params.target_spacing) out = resample(out, *params.target_spacing);
  if (params.reference_cdf) out = histogram_match(out, *params.reference_cdf);
  return out;
}

}  // namespace cellseg
