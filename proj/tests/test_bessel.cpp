#include <gtest/gtest.h>

#include <cmath>

#include "qctrl/bessel.hpp"

namespace {

using namespace qctrl;

TEST(BesselJ0, MatchesStandardLibrary) {
  for (double x = -30.0; x <= 60.0; x += 0.173) EXPECT_NEAR(bessel_j0(x), std::cyl_bessel_j(0.0, std::abs(x)), 1e-12) << x;
}

TEST(BesselJ0, SeriesAndRecurrenceAgreeOnOverlap) {
  for (double x = 0.5; x < 8.0; x += 0.25) EXPECT_NEAR(bessel_j0_series(x), detail::bessel_j0_miller(x), 1e-13) << x;
}

TEST(BesselJ0, SpecialValues) {
  EXPECT_EQ(bessel_j0(0.0), 1.0);
  EXPECT_THROW(bessel_j0(1000.0), ConfigError);
}

TEST(BesselJ0Zero, KnownRoots) {
  EXPECT_NEAR(bessel_j0_zero(1), 2.404825557695773, 1e-12);
  EXPECT_NEAR(bessel_j0_zero(2), 5.520078110286311, 1e-12);
  EXPECT_NEAR(bessel_j0_zero(3), 8.653727912911013, 1e-12);
  for (int k = 1; k <= 12; ++k) EXPECT_LT(std::abs(std::cyl_bessel_j(0.0, bessel_j0_zero(k))), 1e-12);
  EXPECT_THROW(bessel_j0_zero(0), ConfigError);
}

}  // namespace
