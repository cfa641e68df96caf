#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "aoi/core.hpp"
#include "aoi/errors.hpp"
#include "aoi/optimize.hpp"

// Closed-form average-age expressions for the N-source M/M/1 status-update
// queue under FCFS, LCFS with preemption in service (LCFS-S), and LCFS with
// preemption in waiting only (LCFS-W), plus the supporting moment formulas
// and symmetric large-N limits.

namespace aoi {

namespace detail {
inline void require_fcfs_stable(double rho, const char* where) {
  if (!(rho < 1.0))
    throw UnstableLoad(std::string(where) + ": total load " + std::to_string(rho) +
                       " is unstable (FCFS requires rho < 1)");
}
}  // namespace detail

// FCFS average age of source i:
//   (1/mu) [ rho_i^2 (1 - rho rho_{-i}) / ((1 - rho)(1 - rho_{-i})^3)
//            + 1/(1 - rho_{-i}) + 1/rho_i ].
inline double fcfs_age(const SourceLoads& loads, std::size_t i) {
  loads.check_index(i);
  const double rho = loads.total();
  detail::require_fcfs_stable(rho, "fcfs_age");
  const double ri = loads.rhos[i];
  const double ro = loads.other(i);
  const double t1 = ri * ri * (1.0 - rho * ro) / ((1.0 - rho) * std::pow(1.0 - ro, 3));
  return (t1 + 1.0 / (1.0 - ro) + 1.0 / ri) / loads.mu;
}

// Single-source FCFS age (1/mu)[rho^2/(1-rho) + 1 + 1/rho].
inline double fcfs_single_age(double rho, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("fcfs_single_age: mu must be > 0");
  if (!(rho > 0.0)) throw std::invalid_argument("fcfs_single_age: rho must be > 0");
  detail::require_fcfs_stable(rho, "fcfs_single_age");
  return (rho * rho / (1.0 - rho) + 1.0 + 1.0 / rho) / mu;
}

// LCFS-S average age of source i: (1/mu)(1 + rho)/rho_i. No stability limit.
inline double lcfs_s_age(const SourceLoads& loads, std::size_t i) {
  loads.check_index(i);
  return (1.0 + loads.total()) / loads.rhos[i] / loads.mu;
}

// The LCFS-W coefficient ((1+rho+rho^2)^2 + 2 rho^3) / ((1+rho+rho^2)(1+rho)^2),
// bounded in (0.837, 1.09) for all rho >= 0.
inline double alpha_w(double rho) {
  if (rho < 0.0) throw std::invalid_argument("alpha_w: rho must be >= 0");
  const double c = 1.0 + rho + rho * rho;
  return (c * c + 2.0 * rho * rho * rho) / (c * (1.0 + rho) * (1.0 + rho));
}

// LCFS-W average age of source i: (1/mu)[alpha_w(rho) + (1 + rho^2/(1+rho))/rho_i].
inline double lcfs_w_age(const SourceLoads& loads, std::size_t i) {
  loads.check_index(i);
  const double rho = loads.total();
  return (alpha_w(rho) + (1.0 + rho * rho / (1.0 + rho)) / loads.rhos[i]) / loads.mu;
}

// FCFS E[YW] for source i (Y: interarrival between delivered source-i
// updates, W: waiting time):
//   (1/mu^2)[ rho_i (1 - rho rho_{-i}) / ((1 - rho)(1 - rho_{-i})^3)
//             + rho_{-i} / (rho_i (1 - rho_{-i})) ].
// Consistency: lambda_i E[YW] + 1/mu + 1/lambda_i == fcfs_age.
inline double fcfs_eyw(const SourceLoads& loads, std::size_t i) {
  loads.check_index(i);
  const double rho = loads.total();
  detail::require_fcfs_stable(rho, "fcfs_eyw");
  const double ri = loads.rhos[i];
  const double ro = loads.other(i);
  const double t1 = ri * (1.0 - rho * ro) / ((1.0 - rho) * std::pow(1.0 - ro, 3));
  const double t2 = ro / (ri * (1.0 - ro));
  return (t1 + t2) / (loads.mu * loads.mu);
}

// Moment chain behind the LCFS-S age: interdeparture time D of delivered
// source-i updates and system time T of a delivered update.
struct LcfsSMoments {
  double expected_t = 0.0;   // E[T] = 1/(lambda + mu)
  double expected_d = 0.0;   // E[D] = (mu + lambda)/(lambda_i mu)
  double expected_d2 = 0.0;  // E[D^2]
  double age = 0.0;          // E[T] + E[D^2]/(2 E[D])
};

inline LcfsSMoments lcfs_s_moments(const SourceLoads& loads, std::size_t i) {
  loads.check_index(i);
  const double mu = loads.mu;
  const double lam = loads.total() * mu;
  const double lam_i = loads.lambda(i);
  LcfsSMoments m;
  m.expected_t = 1.0 / (lam + mu);
  m.expected_d = (mu + lam) / (lam_i * mu);
  const double ratio = lam / lam_i;
  const double s = 1.0 / lam + 1.0 / mu;
  m.expected_d2 = 2.0 * ratio * (ratio * s * s - 1.0 / (lam * mu));
  m.age = m.expected_t + m.expected_d2 / (2.0 * m.expected_d);
  return m;
}

// Symmetric-load large-N per-source age approximations; each source offers
// load rho/N so the system load stays rho.
struct LargeNAges {
  double fcfs = std::numeric_limits<double>::quiet_NaN();
  double lcfs_s = 0.0;
  double lcfs_w = 0.0;
  bool fcfs_valid = false;  // false when rho >= 1
};

inline LargeNAges large_n_ages(double rho, std::size_t n, double mu) {
  if (!(rho > 0.0)) throw std::invalid_argument("large_n_ages: rho must be > 0");
  if (!(mu > 0.0)) throw std::invalid_argument("large_n_ages: mu must be > 0");
  if (n < 1) throw std::invalid_argument("large_n_ages: n must be >= 1");
  const double N = static_cast<double>(n);
  LargeNAges out;
  if (rho < 1.0) {
    const double nf = N * (1.0 - rho);
    out.fcfs = (N / mu) * ((1.0 + rho) * rho * rho / (nf * nf * nf) + 1.0 / nf + 1.0 / rho);
    out.fcfs_valid = true;
  }
  out.lcfs_s = (N / mu) * (1.0 + 1.0 / rho);
  out.lcfs_w = (N / mu) * (1.0 + 1.0 / (rho * (1.0 + rho)));
  return out;
}

// Minimizer of the symmetric-load FCFS large-N age: rho*_N = sqrt(N)/(sqrt(N)+1).
inline double fcfs_optimal_symmetric_load(std::size_t n) {
  if (n < 1) throw std::invalid_argument("fcfs_optimal_symmetric_load: n must be >= 1");
  const double s = std::sqrt(static_cast<double>(n));
  return s / (s + 1.0);
}

// Age under the given discipline via the matching closed form.
inline double closed_age(const SourceLoads& loads, Discipline d, std::size_t i) {
  switch (d) {
    case Discipline::Fcfs: return fcfs_age(loads, i);
    case Discipline::LcfsS: return lcfs_s_age(loads, i);
    case Discipline::LcfsW: return lcfs_w_age(loads, i);
  }
  throw std::logic_error("unreachable discipline");
}

inline AgeVector closed_ages(const SourceLoads& loads, Discipline d) {
  AgeVector ages(loads.size());
  for (std::size_t i = 0; i < loads.size(); ++i) ages[i] = closed_age(loads, d, i);
  return ages;
}

}  // namespace aoi
