#include "cellseg/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cellseg/diagnostics.hpp"
#include "cellseg/seeding.hpp"

namespace cellseg {

double CrfParams::effective_candidate_radius() const {
  return candidate_radius > 0.0 ? candidate_radius : 3.0 * sigma_alpha;
}

void CrfParams::validate(std::uint32_t num_labels) const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(sigma_alpha) || !positive(sigma_beta) || !positive(sigma_gamma)) {
    throw ParameterError("CRF sigmas must be > 0");
  }
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !std::isfinite(w1) || !std::isfinite(w2)) {
    throw ParameterError("CRF weights must be >= 0");
  }
  if (iterations < 1) throw ParameterError("CRF iterations must be >= 1");
  if (!(epsilon_floor > 0.0) ||
      !(epsilon_floor < 1.0 / std::max<double>(1.0, static_cast<double>(num_labels)))) {
    throw ParameterError("CRF epsilon_floor must lie in (0, 1/L)");
  }
  if (!(range_step > 0.0) || range_step > 2.0) throw ParameterError("CRF range_step must be in (0, 2]");
  if (!std::isfinite(candidate_radius)) throw ParameterError("CRF candidate_radius must be finite");
}

FeatureVector feature_at(const ScalarVolume& q, std::size_t voxel) {
  return {q.physical(q.coord(voxel)), static_cast<double>(q[voxel])};
}

double pairwise_kernel(const FeatureVector& a, const FeatureVector& b, const CrfParams& params) {
  double dp2 = 0.0;
  for (int k = 0; k < 3; ++k) dp2 += (a.p[k] - b.p[k]) * (a.p[k] - b.p[k]);
  const double dq = a.q - b.q;
  const double sa2 = params.sigma_alpha * params.sigma_alpha;
  const double sb2 = params.sigma_beta * params.sigma_beta;
  const double sg2 = params.sigma_gamma * params.sigma_gamma;
  return params.w1 * std::exp(-dp2 / (2.0 * sa2) - dq * dq / (2.0 * sb2)) +
         params.w2 * std::exp(-dp2 / (2.0 * sg2));
}

// ---------------------------------------------------------------------------
// Candidate sets

CandidateSet::CandidateSet(std::vector<std::size_t> offsets, std::vector<std::uint32_t> labels)
    : offsets_(std::move(offsets)), labels_(std::move(labels)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != labels_.size()) {
    throw DataError("candidate set: malformed offsets");
  }
}

CandidateSet CandidateSet::dense(std::size_t voxels, std::uint32_t num_labels) {
  std::vector<std::size_t> offsets(voxels + 1);
  std::vector<std::uint32_t> labels;
  labels.reserve(voxels * num_labels);
  for (std::size_t v = 0; v < voxels; ++v) {
    offsets[v] = labels.size();
    for (std::uint32_t l = 1; l <= num_labels; ++l) labels.push_back(l);
  }
  offsets[voxels] = labels.size();
  return CandidateSet(std::move(offsets), std::move(labels));
}

std::size_t CandidateSet::find(std::size_t voxel, std::uint32_t label) const noexcept {
  const auto first = labels_.begin() + static_cast<long>(offsets_[voxel]);
  const auto last = labels_.begin() + static_cast<long>(offsets_[voxel + 1]);
  const auto it = std::lower_bound(first, last, label);
  return (it != last && *it == label) ? static_cast<std::size_t>(it - labels_.begin()) : npos;
}

std::uint32_t CandidateSet::max_label() const noexcept {
  return labels_.empty() ? 0u : *std::max_element(labels_.begin(), labels_.end());
}

namespace {

struct Box {
  std::size_t z0 = std::numeric_limits<std::size_t>::max(), y0 = z0, x0 = z0;
  std::size_t z1 = 0, y1 = 0, x1 = 0;
  bool empty() const { return z0 > z1; }
  void add(const VoxelCoord& c) {
    z0 = std::min(z0, c.z), y0 = std::min(y0, c.y), x0 = std::min(x0, c.x);
    z1 = std::max(z1, c.z), y1 = std::max(y1, c.y), x1 = std::max(x1, c.x);
  }
  Dims dims() const { return {z1 - z0 + 1, y1 - y0 + 1, x1 - x0 + 1}; }
};

std::size_t grow(std::size_t lo, double radius, double spacing) {
  const auto r = static_cast<std::size_t>(std::ceil(radius / spacing));
  return lo > r ? lo - r : 0;
}

}  // namespace

CandidateSet build_candidates(const LabelVolume& x0, double radius_um) {
  if (!(radius_um >= 0.0)) throw ParameterError("candidate radius must be >= 0");
  const std::uint32_t L = num_labels(x0);
  const Dims& d = x0.dims();
  const Spacing& s = x0.spacing();
  std::vector<Box> boxes(static_cast<std::size_t>(L) + 1);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (x0[i]) boxes[x0[i]].add(x0.coord(i));
  }

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(L) + 1);
  const double r2 = radius_um * radius_um * (1.0 + 1e-12);
#pragma omp parallel for schedule(dynamic)
  for (long l = 1; l <= static_cast<long>(L); ++l) {
    const Box& b = boxes[l];
    if (b.empty()) continue;
    Box g;
    g.z0 = grow(b.z0, radius_um, s.z), g.y0 = grow(b.y0, radius_um, s.y),
    g.x0 = grow(b.x0, radius_um, s.x);
    g.z1 = std::min(d.z - 1, b.z1 + static_cast<std::size_t>(std::ceil(radius_um / s.z)));
    g.y1 = std::min(d.y - 1, b.y1 + static_cast<std::size_t>(std::ceil(radius_um / s.y)));
    g.x1 = std::min(d.x - 1, b.x1 + static_cast<std::size_t>(std::ceil(radius_um / s.x)));
    const Dims gd = g.dims();
    MaskVolume sites(gd, s, 0);
    for (std::size_t z = 0; z < gd.z; ++z)
      for (std::size_t y = 0; y < gd.y; ++y)
        for (std::size_t x = 0; x < gd.x; ++x)
          sites.at(z, y, x) = x0.at(g.z0 + z, g.y0 + y, g.x0 + x) == static_cast<std::uint32_t>(l);
    const Volume<double> dist2 = squared_distance_transform(sites);
    auto& out = members[l];
    for (std::size_t z = 0; z < gd.z; ++z)
      for (std::size_t y = 0; y < gd.y; ++y)
        for (std::size_t x = 0; x < gd.x; ++x) {
          if (dist2.at(z, y, x) > r2) continue;
          const std::size_t v = x0.index(g.z0 + z, g.y0 + y, g.x0 + x);
          if (x0[v] != 0) out.push_back(v);
        }
  }

  std::vector<std::size_t> offsets(x0.size() + 1, 0);
  for (std::uint32_t l = 1; l <= L; ++l)
    for (std::size_t v : members[l]) ++offsets[v + 1];
  for (std::size_t v = 0; v < x0.size(); ++v) offsets[v + 1] += offsets[v];
  std::vector<std::uint32_t> labels(offsets.back());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::uint32_t l = 1; l <= L; ++l)
    for (std::size_t v : members[l]) labels[cursor[v]++] = l;
  return CandidateSet(std::move(offsets), std::move(labels));
}

double MarginalField::value(std::size_t voxel, std::uint32_t label) const noexcept {
  const std::size_t e = candidates.find(voxel, label);
  return e == CandidateSet::npos ? 0.0 : values[e];
}

double MarginalField::max_normalization_error() const {
  double worst = 0.0;
  for (std::size_t v = 0; v < candidates.voxel_count(); ++v) {
    const std::size_t b = candidates.begin(v), e = candidates.end(v);
    if (b == e) continue;
    double sum = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      if (!std::isfinite(values[k]) || values[k] < 0.0) {
        return std::numeric_limits<double>::infinity();
      }
      sum += values[k];
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

std::vector<double> unary_from_watershed(const ScalarVolume& q, const LabelVolume& x0, double eps,
                                         const CandidateSet& candidates) {
  require_same_dims(q, x0, "unary");
  if (candidates.voxel_count() != q.size()) throw DataError("unary: candidate set size mismatch");
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("unary: eps must lie in (0, 1)");
  std::vector<double> unary(candidates.entry_count());
  for (std::size_t v = 0; v < q.size(); ++v) {
    const std::size_t b = candidates.begin(v), e = candidates.end(v);
    if (b == e) continue;
    const double inside = std::max(1.0 - static_cast<double>(q[v]), eps);
    double norm = 0.0;
    for (std::size_t k = b; k < e; ++k) norm += candidates.label(k) == x0[v] ? inside : eps;
    for (std::size_t k = b; k < e; ++k) {
      const double p = candidates.label(k) == x0[v] ? inside : eps;
      unary[k] = -std::log(p / norm);
    }
  }
  return unary;
}

MarginalField marginals_from_unary(const CandidateSet& candidates, std::span<const double> unary) {
  MarginalField m{candidates, std::vector<double>(candidates.entry_count())};
  for (std::size_t v = 0; v < candidates.voxel_count(); ++v) {
    const std::size_t b = candidates.begin(v), e = candidates.end(v);
    if (b == e) continue;
    double lo = unary[b];
    for (std::size_t k = b; k < e; ++k) lo = std::min(lo, unary[k]);
    double sum = 0.0;
    for (std::size_t k = b; k < e; ++k) sum += (m.values[k] = std::exp(lo - unary[k]));
    for (std::size_t k = b; k < e; ++k) m.values[k] /= sum;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Message passing

std::vector<double> pairwise_message_bruteforce(const MarginalField& marginals,
                                                const ScalarVolume& q, const CrfParams& params) {
  const CandidateSet& c = marginals.candidates;
  if (q.size() > kBruteForceVoxelLimit) {
    throw ParameterError("brute-force messages are limited to " +
                         std::to_string(kBruteForceVoxelLimit) + " voxels");
  }
  if (c.voxel_count() != q.size()) throw DataError("messages: candidate set size mismatch");
  std::vector<FeatureVector> f(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) f[i] = feature_at(q, i);

  std::vector<double> out(c.entry_count(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (i == j) continue;
      const double k = pairwise_kernel(f[i], f[j], params);
      for (std::size_t e = c.begin(i); e < c.end(i); ++e) {
        const std::size_t ej = c.find(j, c.label(e));
        if (ej != CandidateSet::npos) out[e] += k * marginals.values[ej];
      }
    }
  }
  return out;
}

namespace {

// Unnormalized Gaussian taps exp(-(t*spacing)^2 / 2 sigma^2), |t| <= min(4 sigma, extent-1).
std::vector<float> spatial_taps(double sigma, double spacing, std::size_t extent) {
  const auto reach = static_cast<long>(std::ceil(4.0 * sigma / spacing));
  const long radius = std::min(reach, static_cast<long>(extent) - 1);
  std::vector<float> taps(2 * radius + 1);
  for (long t = -radius; t <= radius; ++t) {
    const double u = t * spacing / sigma;
    taps[t + radius] = static_cast<float>(std::exp(-0.5 * u * u));
  }
  return taps;
}

// Entry lists grouped by label.
struct LabelIndex {
  std::vector<std::size_t> offsets;  // per label
  std::vector<std::size_t> entries;  // entry indices, voxel-ascending within a label
  std::vector<std::size_t> voxel_of_entry;
};

LabelIndex index_by_label(const CandidateSet& c) {
  LabelIndex ix;
  const std::uint32_t L = c.max_label();
  ix.offsets.assign(static_cast<std::size_t>(L) + 2, 0);
  ix.voxel_of_entry.resize(c.entry_count());
  for (std::size_t v = 0; v < c.voxel_count(); ++v) {
    for (std::size_t e = c.begin(v); e < c.end(v); ++e) {
      ix.voxel_of_entry[e] = v;
      ++ix.offsets[c.label(e) + 1];
    }
  }
  for (std::size_t l = 0; l + 1 < ix.offsets.size(); ++l) ix.offsets[l + 1] += ix.offsets[l];
  ix.entries.resize(c.entry_count());
  std::vector<std::size_t> cursor(ix.offsets.begin(), ix.offsets.end() - 1);
  for (std::size_t e = 0; e < c.entry_count(); ++e) ix.entries[cursor[c.label(e)]++] = e;
  return ix;
}

// Per-thread scratch for one label's box. Buffers are [voxel][lane].
struct Workspace {
  std::vector<float> a, b, pad;
  std::vector<std::uint8_t> row_used;  // (z, y) rows holding any nonzero input
  std::vector<VoxelCoord> local;       // box coordinates of the label's entries
  std::vector<std::size_t> cell;       // box linear index of the label's entries
};

// dst[j] = sum_t g[t] * src[j + t * offset] for j in [0, n).
__attribute__((target_clones("arch=haswell", "default")))
void correlate(float* __restrict dst, const float* __restrict src, const float* __restrict g,
               std::size_t taps, std::size_t offset, std::size_t n) {
  constexpr std::size_t kBlock = 32;
  std::size_t j = 0;
  for (; j + kBlock <= n; j += kBlock) {
    float acc[kBlock] = {};
    for (std::size_t t = 0; t < taps; ++t) {
      const float* p = src + j + t * offset;
      const float w = g[t];
      for (std::size_t m = 0; m < kBlock; ++m) acc[m] += w * p[m];
    }
    for (std::size_t m = 0; m < kBlock; ++m) dst[j + m] = acc[m];
  }
  for (; j < n; ++j) {
    float acc = 0.0f;
    for (std::size_t t = 0; t < taps; ++t) acc += g[t] * src[j + t * offset];
    dst[j] = acc;
  }
}

// Zero-padded Gaussian along x then y of ws.a; the result is left in ws.a.
void filter_xy(Workspace& ws, const Dims& bd, std::size_t lanes, const std::vector<float>& ty,
               const std::vector<float>& tx) {
  const std::size_t row = bd.x * lanes;
  ws.b.resize(ws.a.size());
  const std::size_t rx = tx.size() / 2;
  ws.pad.assign(std::max(row + 2 * rx * lanes, (bd.y + ty.size()) * row), 0.0f);
  for (std::size_t r = 0; r < bd.z * bd.y; ++r) {
    float* dst = ws.b.data() + r * row;
    if (!ws.row_used[r]) {
      std::fill(dst, dst + row, 0.0f);
      continue;
    }
    std::copy_n(ws.a.data() + r * row, row, ws.pad.data() + rx * lanes);
    correlate(dst, ws.pad.data(), tx.data(), tx.size(), lanes, row);
  }
  const std::size_t ry = ty.size() / 2;
  const std::size_t plane = bd.y * row;
  std::fill(ws.pad.begin(), ws.pad.end(), 0.0f);
  for (std::size_t z = 0; z < bd.z; ++z) {
    float* dst = ws.a.data() + z * plane;
    const auto used = ws.row_used.begin() + static_cast<long>(z * bd.y);
    if (std::find(used, used + static_cast<long>(bd.y), 1) == used + static_cast<long>(bd.y)) {
      std::fill(dst, dst + plane, 0.0f);
      continue;
    }
    std::copy_n(ws.b.data() + z * plane, plane, ws.pad.data() + ry * row);
    correlate(dst, ws.pad.data(), ty.data(), ty.size(), row, plane);
  }
}

// z-direction Gaussian of ws.a evaluated at one box voxel for lanes [first, first + count).
template <std::size_t Count>
std::array<double, Count> filter_z_at(const Workspace& ws, const Dims& bd, std::size_t lanes,
                                      const VoxelCoord& c, std::size_t first,
                                      const std::vector<float>& tz) {
  std::array<double, Count> acc{};
  const long rz = static_cast<long>(tz.size() / 2), nz = static_cast<long>(bd.z);
  const long z = static_cast<long>(c.z);
  const std::size_t plane = bd.y * bd.x * lanes;
  const float* base = ws.a.data() + ((c.y * bd.x + c.x) * lanes + first);
  for (long t = std::max(-rz, -z); t <= std::min(rz, nz - 1 - z); ++t) {
    const float* p = base + static_cast<std::size_t>(z + t) * plane;
    const double g = tz[t + rz];
    for (std::size_t m = 0; m < Count; ++m) acc[m] += g * p[m];
  }
  return acc;
}

// Writes exp(-(r0 + k*step - q)^2 / 2 sigma^2) to out[k - first] for k in
// [first, first + count), by multiplicative recurrences outward from the level nearest q.
void range_weights(double q, double r0, double step, double sigma, long first, long count,
                   double* out) {
  const double delta = step / sigma;
  const double c = std::exp(-delta * delta);
  const long center = std::clamp(std::lround((q - r0) / step), first, first + count - 1);
  const double u = (r0 + center * step - q) / sigma;
  out[center - first] = std::exp(-0.5 * u * u);
  const double up0 = std::exp(-u * delta - 0.5 * delta * delta);
  double up = up0;
  for (long k = center + 1; k < first + count; ++k) {
    out[k - first] = out[k - 1 - first] * up;
    up *= c;
  }
  double down = c / up0;  // exp(u delta - delta^2 / 2)
  for (long k = center - 1; k >= first; --k) {
    out[k - first] = out[k + 1 - first] * down;
    down *= c;
  }
}

// Cubic Lagrange weights for nodes -1, 0, 1, 2 at t in [0, 1).
std::array<double, 4> cubic_weights(double t) {
  return {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
          -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
}

}  // namespace

std::vector<double> pairwise_message_fast(const MarginalField& marginals, const ScalarVolume& q,
                                          const CrfParams& params) {
  const CandidateSet& c = marginals.candidates;
  if (c.voxel_count() != q.size()) throw DataError("messages: candidate set size mismatch");
  const LabelIndex ix = index_by_label(c);
  const std::vector<double>& Q = marginals.values;
  const Spacing& sp = q.spacing();
  const double step = params.range_step * params.sigma_beta;

  std::vector<double> out(c.entry_count(), 0.0);
  const long L = static_cast<long>(ix.offsets.size()) - 2;
#pragma omp parallel
  {
    Workspace ws;
    std::vector<double> weights;
#pragma omp for schedule(dynamic)
    for (long l = 1; l <= L; ++l) {
      const std::size_t first = ix.offsets[l], last = ix.offsets[l + 1];
      if (first == last) continue;
      Box box;
      double qmin = 1e300, qmax = -1e300;
      for (std::size_t k = first; k < last; ++k) {
        const std::size_t v = ix.voxel_of_entry[ix.entries[k]];
        box.add(q.coord(v));
        qmin = std::min(qmin, static_cast<double>(q[v]));
        qmax = std::max(qmax, static_cast<double>(q[v]));
      }
      const Dims bd = box.dims();
      const std::size_t bn = bd.count();
      ws.local.resize(last - first);
      ws.cell.resize(last - first);
      ws.row_used.assign(bd.z * bd.y, 0);
      for (std::size_t k = first; k < last; ++k) {
        const VoxelCoord g = q.coord(ix.voxel_of_entry[ix.entries[k]]);
        const VoxelCoord b{g.z - box.z0, g.y - box.y0, g.x - box.x0};
        ws.local[k - first] = b;
        ws.cell[k - first] = (b.z * bd.y + b.y) * bd.x + b.x;
        if (Q[ix.entries[k]] != 0.0) ws.row_used[b.z * bd.y + b.y] = 1;
      }

      if (params.w2 > 0.0) {
        const auto tz = spatial_taps(params.sigma_gamma, sp.z, bd.z);
        ws.a.assign(bn, 0.0f);
        for (std::size_t k = first; k < last; ++k) {
          ws.a[ws.cell[k - first]] = static_cast<float>(Q[ix.entries[k]]);
        }
        filter_xy(ws, bd, 1, spatial_taps(params.sigma_gamma, sp.y, bd.y),
                  spatial_taps(params.sigma_gamma, sp.x, bd.x));
        for (std::size_t k = first; k < last; ++k) {
          const std::size_t e = ix.entries[k];
          const double v = filter_z_at<1>(ws, bd, 1, ws.local[k - first], 0, tz)[0];
          out[e] += params.w2 * (v - Q[e]);
        }
      }

      if (params.w1 > 0.0) {
        const auto tz = spatial_taps(params.sigma_alpha, sp.z, bd.z);
        const double r0 = qmin - step;
        const auto levels = static_cast<std::size_t>(std::floor((qmax - qmin) / step)) + 4;
        ws.a.assign(bn * levels, 0.0f);
        weights.resize(levels);
        for (std::size_t k = first; k < last; ++k) {
          const std::size_t e = ix.entries[k];
          if (Q[e] == 0.0) continue;
          range_weights(q[ix.voxel_of_entry[e]], r0, step, params.sigma_beta, 0,
                        static_cast<long>(levels), weights.data());
          float* lane = ws.a.data() + ws.cell[k - first] * levels;
          for (std::size_t j = 0; j < levels; ++j) lane[j] = static_cast<float>(weights[j] * Q[e]);
        }
        filter_xy(ws, bd, levels, spatial_taps(params.sigma_alpha, sp.y, bd.y),
                  spatial_taps(params.sigma_alpha, sp.x, bd.x));
        for (std::size_t k = first; k < last; ++k) {
          const std::size_t e = ix.entries[k];
          const double qi = q[ix.voxel_of_entry[e]];
          const double pos = (qi - r0) / step;
          const auto k0 = std::clamp<long>(static_cast<long>(std::floor(pos)), 1,
                                           static_cast<long>(levels) - 3);
          const auto cw = cubic_weights(pos - static_cast<double>(k0));
          range_weights(qi, r0, step, params.sigma_beta, k0 - 1, 4, weights.data());
          const auto lane = filter_z_at<4>(ws, bd, levels, ws.local[k - first],
                                           static_cast<std::size_t>(k0 - 1), tz);
          double filtered = 0.0, self = 0.0;
          for (int m = 0; m < 4; ++m) {
            filtered += cw[m] * lane[m];
            self += cw[m] * weights[m];
          }
          out[e] += params.w1 * (filtered - self * Q[e]);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean-field refinement

namespace {

// Index of the largest marginal; exact ties resolve to `preferred`, then lowest label.
std::uint32_t argmax_label(const CandidateSet& c, const std::vector<double>& values,
                           std::size_t v, std::uint32_t preferred) {
  const std::size_t b = c.begin(v), e = c.end(v);
  if (b == e) return preferred;
  std::size_t best = b;
  for (std::size_t k = b + 1; k < e; ++k) {
    if (values[k] > values[best]) best = k;
  }
  const std::size_t pref = c.find(v, preferred);
  if (pref != CandidateSet::npos && values[pref] == values[best]) return preferred;
  return c.label(best);
}

}  // namespace

LabelVolume mean_field_refine(const ScalarVolume& q, const LabelVolume& x0,
                              const CrfParams& params, RefineReport* report) {
  require_same_dims(q, x0, "CRF refinement");
  const std::uint32_t L = num_labels(x0);
  params.validate(L);
  if (report) *report = RefineReport{};

  const CandidateSet candidates = build_candidates(x0, params.effective_candidate_radius());
  const std::vector<double> unary =
      unary_from_watershed(q, x0, params.epsilon_floor, candidates);
  MarginalField marginals = marginals_from_unary(candidates, unary);

  LabelVolume labels = x0;
  double worst_norm = marginals.max_normalization_error();
  const long N = static_cast<long>(q.size());
  for (int it = 0; it < params.iterations; ++it) {
    const std::vector<double> msg = pairwise_message_fast(marginals, q, params);
    std::size_t changed = 0;
#pragma omp parallel for schedule(static) reduction(+ : changed)
    for (long v = 0; v < N; ++v) {
      const std::size_t b = candidates.begin(v), e = candidates.end(v);
      if (e - b < 2) continue;
      // Potts: pairwise cost of label l is sum over other candidate labels of their message.
      double total = 0.0;
      for (std::size_t k = b; k < e; ++k) total += msg[k];
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t k = b; k < e; ++k) {
        marginals.values[k] = -unary[k] - (total - msg[k]);
        hi = std::max(hi, marginals.values[k]);
      }
      double sum = 0.0;
      for (std::size_t k = b; k < e; ++k) sum += (marginals.values[k] = std::exp(marginals.values[k] - hi));
      for (std::size_t k = b; k < e; ++k) marginals.values[k] /= sum;
      const std::uint32_t next = argmax_label(candidates, marginals.values, v, x0[v]);
      if (next != labels[v]) {
        labels[v] = next;
        ++changed;
      }
    }
    worst_norm = std::max(worst_norm, marginals.max_normalization_error());
    if (report) report->changed_per_iteration.push_back(changed);
  }

  // Voxels with fewer than two candidates keep their label through the loop above;
  // recompute the rest from the final marginals.
  for (long v = 0; v < N; ++v) labels[v] = argmax_label(candidates, marginals.values, v, x0[v]);

  std::vector<std::uint8_t> before(static_cast<std::size_t>(L) + 1, 0), after(before);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    before[x0[i]] = 1;
    after[labels[i]] = 1;
  }
  std::vector<std::uint32_t> vanished;
  for (std::uint32_t l = 1; l <= L; ++l) {
    if (before[l] && !after[l]) vanished.push_back(l);
  }
  if (!vanished.empty()) {
    warn("CRF refinement removed " + std::to_string(vanished.size()) + " label(s)");
  }
  if (report) {
    report->vanished_labels = std::move(vanished);
    report->max_normalization_error = worst_norm;
    report->candidate_entries = candidates.entry_count();
  }
  return labels;
}

}  // namespace cellseg
