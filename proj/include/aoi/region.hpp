#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aoi/closed_form.hpp"
#include "aoi/core.hpp"
#include "aoi/errors.hpp"
#include "aoi/optimize.hpp"

// Load-region analyses built on the closed forms: two-source age contours at
// fixed total load, sum-age minimization per discipline, best-policy maps
// over (split, total-load) grids, the LCFS-W vs LCFS-S crossover predicate,
// and the synchronous rate-adaptation iteration with its quadratic
// best-response map.

namespace aoi {

// ---------------------------------------------------------------------------
// Age contours

// One sweep point of a two-source contour: the split and the per-source ages.
struct RegionPoint {
  std::vector<double> rhos;  // per-source loads; sums to the grid's total
  AgeVector ages;            // per-source ages under the grid's discipline
};

struct RegionGrid {
  Discipline discipline = Discipline::Fcfs;
  double mu = 1.0;
  double total = 0.0;
  std::vector<RegionPoint> points;
};

// Sweeps rho_1 over the open interval (0, total_rho) at grid_points evenly
// spaced samples, with rho_1/total kept inside [margin, 1 - margin] because
// every age diverges as 1/rho_i at the endpoints. rho_2 = total - rho_1.
inline RegionGrid age_contour(double total_rho, Discipline d, double mu,
                              std::size_t grid_points, double margin = 1e-3) {
  if (!(mu > 0.0)) throw std::invalid_argument("age_contour: mu must be > 0");
  if (!(total_rho > 0.0)) throw std::invalid_argument("age_contour: total_rho must be > 0");
  if (grid_points < 2) throw std::invalid_argument("age_contour: grid_points must be >= 2");
  if (!(margin > 0.0 && margin < 0.5))
    throw std::invalid_argument("age_contour: margin must lie in (0, 0.5)");
  if (d == Discipline::Fcfs) detail::require_fcfs_stable(total_rho, "age_contour");

  RegionGrid grid;
  grid.discipline = d;
  grid.mu = mu;
  grid.total = total_rho;
  grid.points.reserve(grid_points);
  const double g = static_cast<double>(grid_points - 1);
  for (std::size_t k = 0; k < grid_points; ++k) {
    const double s = margin + (1.0 - 2.0 * margin) * static_cast<double>(k) / g;
    const double r1 = s * total_rho;
    RegionPoint pt;
    pt.rhos = {r1, total_rho - r1};
    pt.ages = closed_ages(SourceLoads(mu, pt.rhos), d);
    grid.points.push_back(std::move(pt));
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Sum-age minimization

struct MinSumResult {
  std::vector<double> rho_star;  // per-source loads at the reported optimum
  double sum_age = 0.0;          // sum of per-source ages at rho_star
  bool capped = false;           // LCFS disciplines: optimum reported at the load cap
  double limit_sum_age = 0.0;    // LCFS: analytic limit as rho -> inf; FCFS: == sum_age
};

// Minimizes the sum age over equal-split loads. FCFS has an interior optimum
// in total load, found by golden-section on (0, 1). Both LCFS sums decrease
// monotonically in the total load, so the optimum over any capped range sits
// at the cap; the result reports the age at rho_cap together with the
// analytic limit (n^2/mu for LCFS-S, n(n+1)/mu for LCFS-W).
inline MinSumResult min_sum_age(Discipline d, std::size_t n, double mu, double rho_cap = 2.0) {
  if (n < 1) throw std::invalid_argument("min_sum_age: n must be >= 1");
  if (!(mu > 0.0)) throw std::invalid_argument("min_sum_age: mu must be > 0");
  const double nn = static_cast<double>(n);
  MinSumResult out;
  if (d == Discipline::Fcfs) {
    const auto sum_at = [&](double total) {
      if (n == 1) return fcfs_single_age(total, mu);
      return nn * fcfs_age(SourceLoads(mu, std::vector<double>(n, total / nn)), 0);
    };
    const auto [total_star, sum] = golden_section_min(sum_at, 1e-6, 1.0 - 1e-9, 1e-9);
    out.rho_star.assign(n, total_star / nn);
    out.sum_age = sum;
    out.limit_sum_age = sum;
    return out;
  }
  if (!(rho_cap > 0.0)) throw std::invalid_argument("min_sum_age: rho_cap must be > 0");
  out.rho_star.assign(n, rho_cap / nn);
  const SourceLoads at_cap(mu, out.rho_star);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += closed_age(at_cap, d, i);
  out.sum_age = sum;
  out.capped = true;
  out.limit_sum_age = (d == Discipline::LcfsS ? nn * nn : nn * (nn + 1.0)) / mu;
  return out;
}

// ---------------------------------------------------------------------------
// Best-policy map

struct PolicyCell {
  double split = 0.0;  // rho_1 / rho
  double total = 0.0;  // rho
  bool fcfs_feasible = false;
  Discipline best = Discipline::Fcfs;  // argmin of the sum age over feasible disciplines
  double sum_age = 0.0;                // the winning sum
};

struct PolicyMap {
  double mu = 1.0;
  std::vector<double> splits;  // grid axis values, ascending
  std::vector<double> totals;
  std::vector<PolicyCell> cells;  // row-major: totals outer, splits inner
};

namespace detail {
inline std::vector<double> linspace_closed(std::pair<double, double> range, std::size_t count,
                                           const char* what) {
  if (count < 1) throw std::invalid_argument(std::string("best_policy_map: ") + what +
                                             " cell count must be >= 1");
  if (!(range.first <= range.second))
    throw std::invalid_argument(std::string("best_policy_map: empty ") + what + " range");
  std::vector<double> axis;
  axis.reserve(count);
  if (count == 1) {
    axis.push_back((range.first + range.second) / 2.0);
    return axis;
  }
  const double step = (range.second - range.first) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k)
    axis.push_back(range.first + step * static_cast<double>(k));
  return axis;
}
}  // namespace detail

// Tags every (split, total) cell of a two-source grid with the discipline
// whose sum age is smallest there. FCFS competes only where rho < 1. Ties
// within 1e-9 resolve to the earlier entry of the fixed preference order
// FCFS, LCFS-W, LCFS-S, keeping the map deterministic.
inline PolicyMap best_policy_map(std::pair<double, double> rho_range,
                                 std::pair<double, double> split_range, double mu,
                                 std::size_t rho_cells, std::size_t split_cells) {
  if (!(mu > 0.0)) throw std::invalid_argument("best_policy_map: mu must be > 0");
  if (!(rho_range.first > 0.0))
    throw std::invalid_argument("best_policy_map: total loads must be > 0");
  if (!(split_range.first > 0.0 && split_range.second < 1.0))
    throw std::invalid_argument("best_policy_map: splits must lie in (0, 1)");

  PolicyMap map;
  map.mu = mu;
  map.totals = detail::linspace_closed(rho_range, rho_cells, "rho");
  map.splits = detail::linspace_closed(split_range, split_cells, "split");
  map.cells.reserve(map.totals.size() * map.splits.size());
  constexpr double kTieBand = 1e-9;
  for (const double total : map.totals) {
    for (const double split : map.splits) {
      const SourceLoads loads(mu, {split * total, (1.0 - split) * total});
      PolicyCell cell;
      cell.split = split;
      cell.total = total;
      cell.fcfs_feasible = total < 1.0;
      std::vector<std::pair<Discipline, double>> sums;
      if (cell.fcfs_feasible)
        sums.emplace_back(Discipline::Fcfs,
                          fcfs_age(loads, 0) + fcfs_age(loads, 1));
      sums.emplace_back(Discipline::LcfsW, lcfs_w_age(loads, 0) + lcfs_w_age(loads, 1));
      sums.emplace_back(Discipline::LcfsS, lcfs_s_age(loads, 0) + lcfs_s_age(loads, 1));
      double lowest = sums.front().second;
      for (const auto& [disc, sum] : sums) lowest = std::min(lowest, sum);
      for (const auto& [disc, sum] : sums) {
        if (sum <= lowest + kTieBand) {
          cell.best = disc;
          cell.sum_age = sum;
          break;
        }
      }
      map.cells.push_back(cell);
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// LCFS-W vs LCFS-S crossover

// True iff the sum age under LCFS-W is strictly below the sum age under
// LCFS-S, via the equivalent predicate (1/N) sum_i alpha_i^-1 >
// (1+rho) alpha_w(rho) with alpha_i = rho_i / rho. The equivalence is exact:
// sum_S - sum_W = [(rho/(1+rho)) sum_i 1/rho_i - N alpha_w(rho)] / mu.
inline bool crossover(const SourceLoads& loads) {
  const double rho = loads.total();
  const double n = static_cast<double>(loads.size());
  double mean_inv_alpha = 0.0;
  for (const double ri : loads.rhos) mean_inv_alpha += rho / ri;
  mean_inv_alpha /= n;
  return mean_inv_alpha > (1.0 + rho) * alpha_w(rho);
}

// ---------------------------------------------------------------------------
// Rate adaptation

// The quadratic response map rho_i' = (1 - rho_other)/2 + (1 - rho_other)^2/32.
inline double adapt_response(double rho_other) {
  const double u = 1.0 - rho_other;
  return u / 2.0 + u * u / 32.0;
}

// Numerically exact best response: the source-i load minimizing the FCFS age
// against a fixed total load rho_other from the other sources.
inline double exact_best_response(double rho_other, double mu = 1.0) {
  if (!(mu > 0.0)) throw std::invalid_argument("exact_best_response: mu must be > 0");
  if (!(rho_other >= 0.0 && rho_other < 1.0))
    throw std::invalid_argument("exact_best_response: rho_other must lie in [0, 1)");
  const auto age_at = [&](double ri) {
    if (rho_other == 0.0) return fcfs_single_age(ri, mu);
    return fcfs_age(SourceLoads(mu, {ri, rho_other}), 0);
  };
  return golden_section_min(age_at, 1e-9, 1.0 - rho_other - 1e-9, 1e-9).first;
}

struct AdaptTrajectory {
  std::vector<std::vector<double>> iterations;  // iterations[0] is the initial point
  bool converged = false;
  std::vector<double> fixed_point;  // empty unless converged
};

// Synchronous iteration rho_i(k+1) = adapt_response(sum_{j != i} rho_j(k)).
// Converged when every per-source change is < tol. The map can leave the
// positive-load domain when it diverges (a large rho_other makes the response
// negative); the iteration then stops without recording the out-of-domain
// point and reports converged = false.
inline AdaptTrajectory rate_adapt(std::size_t n, std::vector<double> init,
                                  std::size_t max_iters = 200, double tol = 1e-6) {
  if (n < 1) throw std::invalid_argument("rate_adapt: n must be >= 1");
  if (init.size() != n)
    throw std::invalid_argument("rate_adapt: init must supply exactly n loads");
  for (const double r : init)
    if (!(r > 0.0 && r < 1.0))
      throw std::invalid_argument("rate_adapt: initial loads must lie in (0, 1)");
  if (max_iters < 1) throw std::invalid_argument("rate_adapt: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("rate_adapt: tol must be > 0");

  AdaptTrajectory out;
  out.iterations.push_back(init);
  std::vector<double> cur = std::move(init);
  std::vector<double> next(n);
  for (std::size_t k = 0; k < max_iters; ++k) {
    double total = 0.0;
    for (const double r : cur) total += r;
    bool in_domain = true;
    double step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = adapt_response(total - cur[i]);
      if (!(next[i] > 0.0)) in_domain = false;
      step = std::max(step, std::abs(next[i] - cur[i]));
    }
    if (!in_domain) return out;
    out.iterations.push_back(next);
    if (step < tol) {
      out.converged = true;
      out.fixed_point = next;
      return out;
    }
    cur = next;
  }
  return out;
}

}  // namespace aoi
