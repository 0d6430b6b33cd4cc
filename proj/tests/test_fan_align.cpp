#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "symalign/fan_align.hpp"
#include "symalign/simulate.hpp"

using namespace symalign;

namespace {

Sinogram small_fan(double h_px, double alpha = 0.0, std::uint64_t seed = 1) {
  FanProtocol proto;
  proto.n_s = 128;
  proto.n_beta = 128;
  proto.h_px = h_px;
  proto.alpha = alpha;
  proto.seed = seed;
  return proto.simulate();
}

std::vector<double> copy(const Sinogram& s) { return {s.values().begin(), s.values().end()}; }

const Method fan_methods[] = {Method::Yang, Method::LY, Method::TwoDR, Method::FP, Method::FPK};

}  // namespace

TEST(FanAlign, AlignedDataGivesZero) {
  const Sinogram s = small_fan(0.0);
  for (Method m : fan_methods) {
    FanAlignConfig cfg;
    cfg.method = m;
    EXPECT_NEAR(align_fan(s, cfg).h, 0.0, 0.05) << to_string(m);
  }
}

TEST(FanAlign, RecoversPositiveAndNegativeShift) {
  for (double h : {10.0, -10.0, 3.3}) {
    const Sinogram s = small_fan(h);
    for (Method m : fan_methods) {
      FanAlignConfig cfg;
      cfg.method = m;
      const double tol = m == Method::Yang ? 0.15 : 0.1;
      EXPECT_NEAR(align_fan(s, cfg).h, h, tol) << to_string(m) << " h=" << h;
    }
  }
}

TEST(FanAlign, SymmetryMseAgreesWithOracle) {
  const Sinogram s = small_fan(6.0);
  const auto v = copy(s);
  const FanGeometry& g = s.geometry();
  for (double h : {0.0, 5.0, 6.0, 7.5}) {
    EXPECT_NEAR(symmetry_mse(s, h), oracle::symmetry_mse(v, g.n_s, g.n_beta, g.s_max, g.source_radius, h), 1e-12);
  }
  EXPECT_LT(symmetry_mse(s, 6.0), 1e-3);
  EXPECT_LT(symmetry_mse(s, 6.0), symmetry_mse(s, 5.0));
  EXPECT_LT(symmetry_mse(s, 6.0), symmetry_mse(s, 7.0));
  const Sinogram zero(g, std::vector<double>(g.n_s * g.n_beta, 0.0));
  EXPECT_THROW(symmetry_mse(zero, 0.0), std::invalid_argument);
}

// The mirrored sinogram of aligned data reproduces the data up to
// interpolation error.
TEST(FanAlign, MirroredSinogramOfAlignedData) {
  const Sinogram s = small_fan(0.0);
  const auto mirrored = mirrored_sinogram(s);
  EXPECT_LT(oracle::relative_l2(mirrored, copy(s)), 3e-2);
}

TEST(FanAlign, MatchesBruteForceArgmin) {
  for (double alpha : {0.0, 0.006}) {
    const Sinogram s = small_fan(10.0, alpha, 2);
    const FanGeometry& g = s.geometry();
    const double best = oracle::grid_argmin_mse(copy(s), g.n_s, g.n_beta, g.s_max, g.source_radius, -20.0, 20.0, 0.05);
    FanAlignConfig cfg;
    EXPECT_NEAR(align_2dr(s, cfg).h, best, 0.25) << "alpha=" << alpha;
    EXPECT_NEAR(align_fp(s, cfg).h, best, 0.25) << "alpha=" << alpha;
    EXPECT_NEAR(align_fp_k(s, cfg).h, best, 0.25) << "alpha=" << alpha;
  }
}

TEST(FanAlign, FixedPointConvergesQuickly) {
  const Sinogram s = small_fan(10.0);
  FanAlignConfig cfg;
  for (std::size_t j : {0u, 17u, 64u, 100u}) {
    cfg.beta_index = j;
    const AlignmentResult r = align_fp(s, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 5) << "view " << j;
    ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(r.iterations));
    EXPECT_EQ(r.trace.front().h, 0.0);
  }
}

TEST(FanAlign, ScaleInvariance) {
  const Sinogram s = small_fan(4.0);
  std::vector<double> scaled = copy(s);
  for (double& x : scaled) x *= 5.0;
  const Sinogram big(s.geometry(), scaled);
  for (Method m : fan_methods) {
    FanAlignConfig cfg;
    cfg.method = m;
    EXPECT_NEAR(align_fan(big, cfg).h, align_fan(s, cfg).h, 1e-9) << to_string(m);
  }
}

TEST(FanAlign, ConfigurationErrors) {
  const Sinogram s = small_fan(0.0);
  FanAlignConfig cfg;
  cfg.K = 129;
  EXPECT_THROW(align_fp_k(s, cfg), std::invalid_argument);
  cfg = {};
  cfg.beta_index = 128;
  EXPECT_THROW(align_fp(s, cfg), std::invalid_argument);
  cfg = {};
  cfg.K = 0;
  EXPECT_THROW(align_fp_k(s, cfg), std::invalid_argument);
  cfg = {};
  cfg.method = Method::VP_2DR;
  EXPECT_THROW(align_fan(s, cfg), std::invalid_argument);
}

TEST(FanAlign, FixedPointMedianSurvivesBadView) {
  const Sinogram s = small_fan(10.0);
  std::vector<double> v = copy(s);
  for (std::size_t i = 0; i < s.n_s(); ++i) v[i] = 0.0;
  const Sinogram bad(s.geometry(), v);
  FanAlignConfig cfg;
  EXPECT_THROW(align_fp(bad, cfg), RegistrationError);
  EXPECT_NEAR(align_fp_k(bad, cfg).h, 10.0, 0.1);

  // corrupt the view with junk instead of zeros
  for (std::size_t i = 0; i < s.n_s(); ++i) v[i] = (i % 7 == 0) ? 5.0 : 0.1;
  const Sinogram junk(s.geometry(), v);
  EXPECT_NEAR(align_fp_k(junk, cfg).h, 10.0, 0.1);
}

TEST(FanAlign, Profiles) {
  const Sinogram s = small_fan(0.0);
  const auto p = profile_p(s);
  double total = 0.0;
  for (double x : s.values()) total += x;
  double sum_p = 0.0;
  for (double x : p) sum_p += x;
  EXPECT_NEAR(sum_p, total, 1e-9 * total);
  // aligned data: w approximates the reversed p
  const auto w = profile_w(s);
  EXPECT_LT(oracle::relative_l2(w, std::vector<double>(p.rbegin(), p.rend())), 2e-2);
}
