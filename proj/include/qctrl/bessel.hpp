// bessel.hpp: J0 and its positive zeros, as needed by the ideal sine-pulse condition.

#pragma once

#include <cmath>
#include <cstdlib>
#include <string>

#include "qctrl/error.hpp"

namespace qctrl {

inline constexpr double kBesselMaxArgument = 100.0;

/// Power series sum_k (-1)^k (x^2/4)^k / (k!)^2. Accurate to ~1e-15 for |x| < 8.
inline double bessel_j0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= -q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (std::abs(term) < 1e-18 && k > q) break;
  }
  return sum;
}

namespace detail {

// Miller's backward recurrence J_{k-1} = (2k/x) J_k - J_{k+1}, normalized
// through J_0 + 2 sum_{k>=1} J_{2k} = 1.
inline double bessel_j0_miller(double x) {
  const double ax = std::abs(x);
  int m = static_cast<int>(ax + 40.0 + 8.0 * std::sqrt(ax));
  m += m % 2;
  double j_next = 0.0;
  double j_cur = 1e-30;
  double even_sum = 0.0;
  double j0 = 0.0;
  for (int k = m; k >= 1; --k) {
    const double j_prev = (2.0 * k / ax) * j_cur - j_next;
    j_next = j_cur;
    j_cur = j_prev;
    if ((k - 1) % 2 == 0 && k - 1 > 0) even_sum += j_cur;
    if (std::abs(j_cur) > 1e250) {
      j_cur *= 1e-250;
      j_next *= 1e-250;
      even_sum *= 1e-250;
    }
  }
  j0 = j_cur;
  return j0 / (j0 + 2.0 * even_sum);
}

}  // namespace detail

/// Zero-order Bessel function of the first kind on |x| <= 100.
inline double bessel_j0(double x) {
  if (!std::isfinite(x) || std::abs(x) > kBesselMaxArgument)
    throw ConfigError("bessel_j0: argument outside [-100, 100]");
  if (std::abs(x) < 8.0) return bessel_j0_series(x);
  return detail::bessel_j0_miller(x);
}

/// k-th positive root of J0 (k >= 1), bracketed on a 0.25 scan and bisected to ~1e-14.
inline double bessel_j0_zero(int k) {
  if (k < 1) throw ConfigError("bessel_j0_zero: index must be >= 1");
  const double step = 0.25;
  int found = 0;
  double lo = 0.0;
  double f_lo = bessel_j0(lo);
  for (double hi = step; hi <= kBesselMaxArgument; hi += step) {
    const double f_hi = bessel_j0(hi);
    if ((f_lo > 0.0) != (f_hi > 0.0) && ++found == k) {
      double a = lo, b = hi, fa = f_lo;
      for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = bessel_j0(mid);
        if ((fm > 0.0) == (fa > 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      return 0.5 * (a + b);
    }
    lo = hi;
    f_lo = f_hi;
  }
  throw ConfigError("bessel_j0_zero: root " + std::to_string(k) + " lies beyond the supported range");
}

}  // namespace qctrl
