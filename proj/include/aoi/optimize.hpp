#pragma once

#include <cmath>
#include <functional>
#include <utility>

namespace aoi {

// Golden-section search for the minimizer of a smooth unimodal function on
// [lo, hi]. Returns (argmin, min value). tol is absolute on the argument.
inline std::pair<double, double> golden_section_min(const std::function<double(double)>& f,
                                                    double lo, double hi, double tol = 1e-6) {
  static const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;   // 1/phi
  static const double inv_phi2 = (3.0 - std::sqrt(5.0)) / 2.0;  // 1/phi^2
  double a = lo, b = hi;
  double h = b - a;
  double c = a + inv_phi2 * h;
  double d = a + inv_phi * h;
  double fc = f(c), fd = f(d);
  while (h > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      h = b - a;
      c = a + inv_phi2 * h;
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      h = b - a;
      d = a + inv_phi * h;
      fd = f(d);
    }
  }
  double x = (a + b) / 2.0;
  return {x, f(x)};
}

}  // namespace aoi
