#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cellseg/volume.hpp"

namespace cellseg {

/// Dense-CRF hyperparameters. Kernel between voxels i, j:
///   w1 exp(-|p_i-p_j|^2 / 2 sa^2 - (q_i-q_j)^2 / 2 sb^2) + w2 exp(-|p_i-p_j|^2 / 2 sg^2)
/// with Potts compatibility.
struct CrfParams {
  double w1 = 5.0;
  double w2 = 3.0;
  double sigma_alpha = 2.0;  ///< µm
  double sigma_beta = 0.1;   ///< probability units
  double sigma_gamma = 1.0;  ///< µm
  int iterations = 5;
  double epsilon_floor = 1e-6;
  double candidate_radius = 0.0;  ///< µm; <= 0 selects 3 * sigma_alpha
  double range_step = 0.75;       ///< range-level spacing of the fast filter, in sigma_beta

  double effective_candidate_radius() const;
  /// Throws ParameterError when an invariant fails; `num_labels` bounds epsilon_floor.
  void validate(std::uint32_t num_labels) const;
};

struct FeatureVector {
  std::array<double, 3> p;  ///< µm, (z, y, x)
  double q;
};

FeatureVector feature_at(const ScalarVolume& q, std::size_t voxel);

double pairwise_kernel(const FeatureVector& a, const FeatureVector& b, const CrfParams& params);

/// Per-voxel candidate labels in compressed-row form, labels ascending per voxel.
class CandidateSet {
 public:
  CandidateSet() = default;
  CandidateSet(std::vector<std::size_t> offsets, std::vector<std::uint32_t> labels);

  /// Every voxel may take every label 1..L.
  static CandidateSet dense(std::size_t voxels, std::uint32_t num_labels);

  std::size_t voxel_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t entry_count() const noexcept { return labels_.size(); }
  std::size_t begin(std::size_t voxel) const noexcept { return offsets_[voxel]; }
  std::size_t end(std::size_t voxel) const noexcept { return offsets_[voxel + 1]; }
  std::span<const std::uint32_t> labels_of(std::size_t voxel) const noexcept {
    return {labels_.data() + offsets_[voxel], labels_.data() + offsets_[voxel + 1]};
  }
  std::uint32_t label(std::size_t entry) const noexcept { return labels_[entry]; }
  /// Entry index of `label` at `voxel`, or npos.
  std::size_t find(std::size_t voxel, std::uint32_t label) const noexcept;
  std::uint32_t max_label() const noexcept;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> labels_;
};

/// Labels whose region in `x0` lies within `radius_um` (physical metric) of each
/// voxel. Voxels labeled 0 get no candidates and are left out of refinement.
CandidateSet build_candidates(const LabelVolume& x0, double radius_um);

/// Mean-field marginals, one value per candidate entry.
struct MarginalField {
  CandidateSet candidates;
  std::vector<double> values;

  double value(std::size_t voxel, std::uint32_t label) const noexcept;
  /// max over voxels with candidates of |sum - 1|; +inf if any value is not finite.
  double max_normalization_error() const;
};

/// psi_u = -log P with P(l) = max(1 - q, eps) for the watershed label, eps otherwise,
/// renormalized over each voxel's candidates. Aligned with `candidates` entries.
std::vector<double> unary_from_watershed(const ScalarVolume& q, const LabelVolume& x0, double eps,
                                         const CandidateSet& candidates);

/// Per-voxel softmax of -unary.
MarginalField marginals_from_unary(const CandidateSet& candidates, std::span<const double> unary);

/// m_i(l) = sum_{j != i} k(f_i, f_j) Q_j(l) by direct summation. At most 4096 voxels.
std::vector<double> pairwise_message_bruteforce(const MarginalField& marginals,
                                                const ScalarVolume& q, const CrfParams& params);

inline constexpr std::size_t kBruteForceVoxelLimit = 4096;

/// Same quantity as the brute-force path. The spatial Gaussian factors are applied
/// exactly (separable, zero outside each label's support); the bilateral term samples
/// the q axis at levels spaced range_step * sigma_beta and interpolates cubically,
/// with the self contribution removed analytically.
std::vector<double> pairwise_message_fast(const MarginalField& marginals, const ScalarVolume& q,
                                          const CrfParams& params);

struct RefineReport {
  std::vector<std::size_t> changed_per_iteration;
  std::vector<std::uint32_t> vanished_labels;
  double max_normalization_error = 0.0;
  std::size_t candidate_entries = 0;
};

/// Mean-field minimization of the Gibbs energy, initialized from the unary.
/// Returns per-voxel argmax (ties keep the watershed label).
LabelVolume mean_field_refine(const ScalarVolume& q, const LabelVolume& x0,
                              const CrfParams& params, RefineReport* report = nullptr);

}  // namespace cellseg
