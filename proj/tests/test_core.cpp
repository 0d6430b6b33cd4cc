#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "symalign/core.hpp"

using namespace symalign;

TEST(WrapAngle, KnownValues) {
  EXPECT_DOUBLE_EQ(wrap_angle(0.0), 0.0);
  EXPECT_NEAR(wrap_angle(-0.5), two_pi - 0.5, 1e-15);
  EXPECT_NEAR(wrap_angle(7.0 * pi), pi, 1e-12);
  EXPECT_EQ(wrap_angle(two_pi), 0.0);
  // tiny negative values must not come back as 2*pi
  EXPECT_LT(wrap_angle(-1e-18), two_pi);
}

TEST(WrapAngle, IdempotentAndInRange) {
  for (double x = -40.0; x < 40.0; x += 0.37) {
    const double w = wrap_angle(x);
    EXPECT_GE(w, 0.0);
    EXPECT_LT(w, two_pi);
    EXPECT_EQ(wrap_angle(w), w);
    EXPECT_NEAR(std::cos(w), std::cos(x), 1e-12);
  }
}

TEST(WrapAngle, RejectsNonFinite) {
  EXPECT_THROW(wrap_angle(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  EXPECT_THROW(wrap_angle(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST(Geometry, UnitDiskHalfWidth) {
  // tangent to the unit circle from distance r meets the axis at r / sqrt(r^2 - 1)
  EXPECT_NEAR(unit_disk_half_width(2.0), 2.0 / std::sqrt(3.0), 1e-15);
  EXPECT_THROW(unit_disk_half_width(1.0), std::invalid_argument);
}

TEST(Geometry, FanGridIsSymmetric) {
  const FanGeometry g{2.0, 255, 1.1, 64};
  for (std::size_t i = 0; i < g.n_s; ++i) EXPECT_EQ(g.s(i), -g.s(g.n_s - 1 - i));
  EXPECT_DOUBLE_EQ(g.s(0), -1.1);
  EXPECT_DOUBLE_EQ(g.s(254), 1.1);
  EXPECT_EQ(g.s(127), 0.0);
  EXPECT_NEAR(g.s_index(g.s(17)), 17.0, 1e-12);
  EXPECT_DOUBLE_EQ(g.beta(16), pi / 2.0);
  EXPECT_NEAR(g.length_to_pixels(g.pixels_to_length(3.25)), 3.25, 1e-12);
  const auto axis = effective_detector_axis(g);
  ASSERT_EQ(axis.size(), 255u);
  EXPECT_EQ(axis[3], g.s(3));
}

TEST(Geometry, InvalidFanGeometry) {
  EXPECT_THROW((FanGeometry{2.0, 1, 1.0, 8}.validate()), std::invalid_argument);
  EXPECT_THROW((FanGeometry{2.0, 8, 1.0, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((FanGeometry{2.0, 8, 0.0, 8}.validate()), std::invalid_argument);
  EXPECT_THROW((FanGeometry{-1.0, 8, 1.0, 8}.validate()), std::invalid_argument);
}

TEST(Geometry, ConeCentralFan) {
  const ConeGeometry c{3.0, 64, 1.2, 33, 0.7, 40};
  const FanGeometry f = c.central_fan();
  EXPECT_EQ(f.n_s, 64u);
  EXPECT_EQ(f.n_beta, 40u);
  EXPECT_EQ(f.s_max, 1.2);
  EXPECT_EQ(f.source_radius, 3.0);
  EXPECT_EQ(c.v(16), 0.0);
  EXPECT_THROW((ConeGeometry{2.0, 8, 1.0, 1, 1.0, 8}.validate()), std::invalid_argument);
}

TEST(Containers, ShapeAndFiniteness) {
  const FanGeometry g{2.0, 4, 1.0, 3};
  EXPECT_THROW(Sinogram(g, std::vector<double>(11)), std::invalid_argument);
  std::vector<double> v(12, 1.0);
  v[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Sinogram(g, v), std::invalid_argument);
  v[5] = 7.0;
  const Sinogram s(g, v);
  EXPECT_EQ(s(1, 1), 7.0);
  EXPECT_EQ(s.view(1)[1], 7.0);

  const ConeGeometry c{2.0, 3, 1.0, 2, 1.0, 2};
  std::vector<double> w(12);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(i);
  const ProjectionStack p(c, w);
  EXPECT_EQ(p(1, 1, 2), 11.0);
  EXPECT_EQ(p.projection(1)[0], 6.0);
  EXPECT_THROW(ProjectionStack(c, std::vector<double>(5)), std::invalid_argument);
}

TEST(Methods, NameRoundTrip) {
  for (Method m : {Method::Yang, Method::LY, Method::TwoDR, Method::FP, Method::FPK, Method::VP_2DR,
                   Method::VP_FPK}) {
    EXPECT_EQ(parse_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_method("sart"), std::invalid_argument);
}
