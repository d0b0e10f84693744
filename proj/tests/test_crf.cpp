#include <doctest.h>

#include <cmath>

#include "cellseg/crf.hpp"
#include "cellseg/diagnostics.hpp"
#include "oracles.hpp"

using namespace cellseg;

namespace {

LabelVolume two_halves(Dims d, Spacing s = {}) {
  LabelVolume x(d, s, 1u);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x.coord(i).x < d.x / 2 ? 1 : 2;
  return x;
}

}  // namespace

TEST_SUITE("crf") {
  TEST_CASE("kernel values at zero and unit separation") {
    CrfParams p;
    p.sigma_alpha = 1.0;
    p.sigma_gamma = 1.0;
    const FeatureVector a{{0, 0, 0}, 0.3}, b{{0, 0, 1}, 0.3}, c{{0, 0, 0}, 0.4};
    CHECK(pairwise_kernel(a, a, p) == doctest::Approx(p.w1 + p.w2));
    CHECK(pairwise_kernel(a, b, p) == doctest::Approx((p.w1 + p.w2) * std::exp(-0.5)));
    CHECK(pairwise_kernel(a, c, p) == doctest::Approx(p.w1 * std::exp(-0.5) + p.w2));

    ScalarVolume q({2, 3, 4}, {2.0, 1.0, 0.5});
    const FeatureVector f = feature_at(q, q.index(1, 2, 3));
    CHECK(f.p == std::array<double, 3>{2.0, 2.0, 1.5});
  }

  TEST_CASE("parameter validation") {
    CrfParams p;
    CHECK_NOTHROW(p.validate(10));
    p.epsilon_floor = 0.5;
    CHECK_THROWS_AS(p.validate(2), ParameterError);
    p = CrfParams{};
    p.sigma_beta = 0;
    CHECK_THROWS_AS(p.validate(2), ParameterError);
    p = CrfParams{};
    p.w1 = -1;
    CHECK_THROWS_AS(p.validate(2), ParameterError);
    p = CrfParams{};
    p.iterations = 0;
    CHECK_THROWS_AS(p.validate(2), ParameterError);
    CHECK(CrfParams{}.effective_candidate_radius() == doctest::Approx(6.0));
  }

  TEST_CASE("unary: half-probability voxel with two labels") {
    ScalarVolume q({1, 1, 2}, {}, 0.5f);
    LabelVolume x({1, 1, 2}, {}, std::vector<std::uint32_t>{1, 2});
    const CandidateSet cs = CandidateSet::dense(2, 2);
    const auto u = unary_from_watershed(q, x, 1e-6, cs);
    const double own = 0.5 / 0.500001, other = 1e-6 / 0.500001;
    CHECK(std::exp(-u[cs.find(0, 1)]) == doctest::Approx(own).epsilon(1e-12));
    CHECK(std::exp(-u[cs.find(0, 2)]) == doctest::Approx(other).epsilon(1e-9));
    CHECK(std::exp(-u[cs.find(1, 2)]) == doctest::Approx(own).epsilon(1e-12));
    const MarginalField m = marginals_from_unary(cs, u);
    CHECK(m.value(0, 1) == doctest::Approx(own).epsilon(1e-12));
    CHECK(m.max_normalization_error() <= 1e-12);
  }

  TEST_CASE("unary floor applies on membranes") {
    ScalarVolume q({1, 1, 1}, {}, 1.0f);
    LabelVolume x({1, 1, 1}, {}, 1u);
    const CandidateSet cs = CandidateSet::dense(1, 3);
    const auto u = unary_from_watershed(q, x, 1e-3, cs);
    for (double v : u) CHECK(v == doctest::Approx(std::log(3.0)));
  }

  TEST_CASE("candidate sets from region distances") {
    LabelVolume x({1, 1, 6}, {}, std::vector<std::uint32_t>{1, 1, 1, 2, 2, 0});
    const CandidateSet cs = build_candidates(x, 1.0);
    CHECK(cs.voxel_count() == 6);
    CHECK(std::vector<std::uint32_t>(cs.labels_of(1).begin(), cs.labels_of(1).end()) ==
          std::vector<std::uint32_t>{1});
    CHECK(std::vector<std::uint32_t>(cs.labels_of(2).begin(), cs.labels_of(2).end()) ==
          std::vector<std::uint32_t>{1, 2});
    CHECK(cs.labels_of(5).empty());
    CHECK(cs.find(2, 2) != CandidateSet::npos);
    CHECK(cs.find(0, 2) == CandidateSet::npos);
    CHECK(cs.max_label() == 2);

    // Anisotropic: radius 1.5 reaches one voxel at 1.0 spacing but not at 2.0.
    LabelVolume y({3, 1, 3}, {2.0, 1.0, 1.0}, 1u);
    y.at(1, 0, 1) = 2;
    const CandidateSet ca = build_candidates(y, 1.5);
    CHECK(ca.find(y.index(1, 0, 0), 2) != CandidateSet::npos);
    CHECK(ca.find(y.index(0, 0, 1), 2) == CandidateSet::npos);
  }

  TEST_CASE("brute-force message matches the kernel written out") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto inst = oracle::random_crf_instance(seed, 5);
      const auto got = pairwise_message_bruteforce(inst.marginals, inst.q, inst.params);
      const auto want = oracle::direct_message(inst.marginals, inst.q, inst.params);
      CHECK(oracle::rel_l2(want, got) <= 1e-12);
    }
  }

  TEST_CASE("spatial-only message against a direct convolution") {
    // w1 = 0 leaves the Gaussian in space only; the fast path applies it exactly.
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
      auto inst = oracle::random_crf_instance(seed, 7);
      inst.params.w1 = 0;
      const auto fast = pairwise_message_fast(inst.marginals, inst.q, inst.params);
      const auto want = oracle::direct_message(inst.marginals, inst.q, inst.params);
      CHECK(oracle::rel_l2(want, fast) <= 1e-5);  // float accumulation
    }
  }

  TEST_CASE("fast bilateral message tracks brute force") {
    double worst = 0;
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      const auto inst = oracle::random_crf_instance(seed);
      const auto fast = pairwise_message_fast(inst.marginals, inst.q, inst.params);
      const auto brute = pairwise_message_bruteforce(inst.marginals, inst.q, inst.params);
      worst = std::max(worst, oracle::rel_l2(brute, fast));
    }
    CHECK(worst <= 1e-2);
  }

  TEST_CASE("uniform marginals on a constant map give the same message for every label") {
    ScalarVolume q({4, 4, 4}, {}, 0.2f);
    const CandidateSet cs = CandidateSet::dense(q.size(), 3);
    const MarginalField m{cs, std::vector<double>(cs.entry_count(), 1.0 / 3)};
    CrfParams p;
    const auto fast = pairwise_message_fast(m, q, p);
    for (std::size_t v = 0; v < q.size(); ++v)
      for (std::size_t k = cs.begin(v) + 1; k < cs.end(v); ++k)
        CHECK(fast[k] == doctest::Approx(fast[cs.begin(v)]).epsilon(1e-6));
  }

  TEST_CASE("brute force refuses large inputs") {
    ScalarVolume q({17, 17, 17}, {});
    const CandidateSet cs = CandidateSet::dense(q.size(), 1);
    const MarginalField m{cs, std::vector<double>(cs.entry_count(), 1.0)};
    CHECK_THROWS_AS(pairwise_message_bruteforce(m, q, CrfParams{}), ParameterError);
  }

  TEST_CASE("zero pairwise weights leave labels unchanged") {
    CounterRng rng(4);
    ScalarVolume q({6, 6, 6}, {});
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<float>(rng.uniform(0, i));
    q[5] = 1.0f;  // tie between candidates keeps the input label
    const LabelVolume x0 = oracle::random_labels(q.dims(), 3, 5);
    CrfParams p;
    p.w1 = p.w2 = 0;
    RefineReport r;
    CHECK(mean_field_refine(q, x0, p, &r) == x0);
    CHECK(r.changed_per_iteration == std::vector<std::size_t>(5, 0));
    CHECK(r.vanished_labels.empty());
  }

  TEST_CASE("refinement keeps normalized marginals and a subset of labels") {
    CounterRng rng(6);
    const Dims d{8, 8, 12};
    ScalarVolume q(d, {});
    LabelVolume x0 = two_halves(d);
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double membrane = std::abs(static_cast<double>(q.coord(i).x) - 5.5) < 1 ? 0.9 : 0.1;
      q[i] = static_cast<float>(std::clamp(membrane + 0.15 * rng.normal(0, i), 0.0, 1.0));
      // Jitter the boundary so the CRF has something to fix.
      if (rng.uniform(1, i) < 0.1) x0[i] = 3 - x0[i];
    }
    RefineReport r;
    const LabelVolume out = mean_field_refine(q, x0, CrfParams{}, &r);
    CHECK(r.max_normalization_error <= 1e-9);
    CHECK(r.changed_per_iteration.size() == 5);
    CHECK(r.candidate_entries > q.size());
    for (std::uint32_t v : out.data()) CHECK((v == 1 || v == 2));

    std::size_t wrong_before = 0, wrong_after = 0;
    const LabelVolume truth = two_halves(d);
    for (std::size_t i = 0; i < q.size(); ++i) {
      wrong_before += x0[i] != truth[i];
      wrong_after += out[i] != truth[i];
    }
    CHECK(wrong_after < wrong_before);
  }

  TEST_CASE("a single voxel label swallowed by its neighbor is reported") {
    ScalarVolume q({5, 5, 5}, {}, 0.0f);
    LabelVolume x0({5, 5, 5}, {}, 1u);
    x0.at(2, 2, 2) = 2;
    RefineReport r;
    WarningCapture w;
    const LabelVolume out = mean_field_refine(q, x0, CrfParams{}, &r);
    CHECK(out.at(2, 2, 2) == 1);
    CHECK(r.vanished_labels == std::vector<std::uint32_t>{2});
    CHECK_FALSE(w.empty());
  }

  TEST_CASE("refinement is deterministic") {
    const auto inst = oracle::random_crf_instance(77, 8);
    CHECK(mean_field_refine(inst.q, inst.x0, inst.params) ==
          mean_field_refine(inst.q, inst.x0, inst.params));
  }
}
