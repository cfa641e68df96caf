#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aoi/closed_form.hpp"
#include "aoi/core.hpp"
#include "aoi/errors.hpp"
#include "aoi/region.hpp"
#include "aoi/shs_model.hpp"
#include "aoi/shs_solver.hpp"
#include "aoi/sim.hpp"

// Cross-validation suite: eleven numbered checks exercising the closed
// forms, the SHS solver, the simulator, and the region analyses against
// each other and against pinned reference values. The fast level runs the
// analytic checks (everything except the two Monte Carlo closures); the
// full level adds them. Tolerances are pinned here, not configurable.

namespace aoi {

struct CheckResult {
  int criterion = 0;  // 1..11
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  bool full = false;          // include the simulation checks (7 and 8)
  int threads = 1;            // worker threads for the simulation checks
  std::uint64_t seed = 1;     // base seed for the simulation checks
  std::string inject_fault;   // testing hook; "shs-closure" corrupts one reset matrix
};

inline const std::vector<std::string>& verify_check_names() {
  static const std::vector<std::string> names{
      "min-sum-fcfs",   "rate-adapt-fixed-point",
      "shs-closure",    "shs-symbolic",
      "stability",      "transient",
      "sim-closure",    "sim-yw-moment",
      "alpha-w-bounds", "large-n-limits",
      "crossover"};
  return names;
}

namespace detail {

inline std::string fmt(double x, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

// Zeroes the first set reset entry, leaving the model structurally valid but
// numerically wrong — the closure check must then report the mismatch.
inline void corrupt_first_reset(ShsModel& model) {
  for (auto& tr : model.transitions)
    for (auto& row : tr.reset)
      for (int& e : row)
        if (e == 1) {
          e = 0;
          return;
        }
}

}  // namespace detail

inline std::vector<CheckResult> run_verification(const VerifyOptions& opts) {
  if (!opts.inject_fault.empty() && opts.inject_fault != "shs-closure")
    throw std::invalid_argument("verify: no fault hook named '" + opts.inject_fault +
                                "' (supported: shs-closure)");
  if (opts.threads < 1) throw std::invalid_argument("verify: threads must be >= 1");

  std::vector<CheckResult> results;
  const auto run = [&results](int crit, const std::string& name, bool enabled,
                              double budget_seconds,
                              const std::function<std::pair<bool, std::string>()>& body) {
    if (!enabled) return;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
      auto [p, d] = body();
      ok = p;
      detail = std::move(d);
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_seconds > 0.0 && secs > budget_seconds) {
      ok = false;
      detail += " [runtime " + detail::fmt(secs, 3) + "s over the " +
                detail::fmt(budget_seconds, 3) + "s budget]";
    }
    results.push_back(CheckResult{crit, name, ok, std::move(detail), secs});
  };

  using detail::fmt;

  // 1. Sum-age minimization reference points.
  run(1, "min-sum-fcfs", true, 1.0, [] {
    const auto two = min_sum_age(Discipline::Fcfs, 2, 1.0);
    const SourceLoads at_two(1.0, two.rho_star);
    const double age_two = fcfs_age(at_two, 0);
    const auto half = min_sum_age(Discipline::Fcfs, 2, 2.0);
    const double age_half = fcfs_age(SourceLoads(2.0, half.rho_star), 0);
    const auto one = min_sum_age(Discipline::Fcfs, 1, 1.0);
    bool ok = true;
    for (const double r : two.rho_star) ok = ok && std::abs(r - 0.306) <= 0.002;
    ok = ok && std::abs(age_two - 5.30) <= 0.01 && std::abs(fcfs_age(at_two, 1) - 5.30) <= 0.01;
    ok = ok && std::abs(age_half - 2.65) <= 0.01;
    ok = ok && std::abs(one.rho_star[0] - 0.531) <= 0.002 && std::abs(one.sum_age - 3.48) <= 0.01;
    return std::pair{ok, "two-source rho*=" + fmt(two.rho_star[0]) + " age=" + fmt(age_two) +
                             "; mu=2 age=" + fmt(age_half) + "; single rho*=" +
                             fmt(one.rho_star[0]) + " age=" + fmt(one.sum_age)};
  });

  // 2. Rate-adaptation fixed point and three-source divergence.
  run(2, "rate-adapt-fixed-point", true, 1.0, [] {
    const auto two = rate_adapt(2, {0.5, 0.5}, 200, 1e-6);
    bool ok = two.converged;
    for (const double r : two.fixed_point) ok = ok && std::abs(r - 0.342) <= 0.001;
    // Age quoted at the rounded load (0.342, 0.342); the slope of the age in
    // rho_i (~8.7 here) makes the age at the unrounded fixed point differ in
    // the third decimal.
    const double age = fcfs_age(SourceLoads(1.0, {0.342, 0.342}), 0);
    ok = ok && std::abs(age - 5.4390) <= 0.001;
    const auto three = rate_adapt(3, {0.3, 0.3, 0.3}, 200, 1e-6);
    ok = ok && !three.converged;
    const std::string fp = two.converged ? fmt(two.fixed_point[0]) : "none";
    return std::pair{ok, "fixed point " + fp + ", age(0.342)=" + fmt(age) +
                             "; three-source converged=" + (three.converged ? "true" : "false")};
  });

  // 3. SHS solver closure against the closed forms on a random rate grid.
  const bool fault = opts.inject_fault == "shs-closure";
  run(3, "shs-closure", true, 5.0, [fault] {
    std::mt19937 rng(90210);
    std::uniform_real_distribution<double> rate(0.05, 2.5), srv(0.3, 3.0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const double mu = srv(rng), l1 = rate(rng), l2 = rate(rng);
      const SourceLoads loads(mu, {l1 / mu, l2 / mu});
      const double want_s = lcfs_s_age(loads, 0), want_w = lcfs_w_age(loads, 0);
      double ages_s[3];
      int k = 0;
      for (const ReferenceKind kind :
           {ReferenceKind::LcfsS3State, ReferenceKind::LcfsS2State, ReferenceKind::LcfsSFake}) {
        ages_s[k++] = solve_age(build_reference_model(kind, l1, l2, mu)).age;
      }
      auto wmodel = build_reference_model(ReferenceKind::LcfsW, l1, l2, mu);
      if (fault && t == 0) detail::corrupt_first_reset(wmodel);
      const double age_w = solve_age(wmodel).age;
      for (const double a : ages_s) worst = std::max(worst, std::abs(a - want_s) / want_s);
      worst = std::max(worst, std::abs(age_w - want_w) / want_w);
      for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
          worst = std::max(worst, std::abs(ages_s[i] - ages_s[j]) / want_s);
    }
    const bool ok = worst < 1e-9;
    std::string d = "worst relative error " + fmt(worst, 3) + " over 100 points x 4 models";
    if (fault) d += " (injected fault: mutated reset matrix)";
    return std::pair{ok, d};
  });

  // 4. Symbolic spot checks of the solver output.
  run(4, "shs-symbolic", true, 0.0, [] {
    std::mt19937 rng(24601);
    std::uniform_real_distribution<double> rate(0.05, 2.5), srv(0.3, 3.0);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const double mu = srv(rng), l1 = rate(rng), l2 = rate(rng);
      const double r1 = l1 / mu, r2 = l2 / mu, r = r1 + r2;
      const auto tri = solve_age(build_reference_model(ReferenceKind::LcfsS3State, l1, l2, mu));
      const double pi_c = 1.0 / (1.0 + r);
      const double want_pi[3] = {pi_c, r1 * pi_c, r2 * pi_c};
      for (int q = 0; q < 3; ++q)
        worst = std::max(worst, std::abs(tri.pi.pi[q] - want_pi[q]));
      const double v00 = ((1.0 + r2) / r1 + 1.0 / (1.0 + r)) / (mu * (1.0 + r));
      const double v10 = (1.0 + r + r1 / (1.0 + r)) / (mu * (1.0 + r));
      const double v20 = (r2 * (1.0 + r) / r1 + r2 / (1.0 + r)) / (mu * (1.0 + r));
      worst = std::max({worst, std::abs(tri.v[0][0] - v00) / v00,
                        std::abs(tri.v[1][0] - v10) / v10, std::abs(tri.v[2][0] - v20) / v20});

      const auto wait = solve_age(build_reference_model(ReferenceKind::LcfsW, l1, l2, mu));
      const double cpi = 1.0 / (1.0 + r + r * r);
      const double want_wpi[3] = {cpi, r * cpi, r * r * cpi};
      for (int q = 0; q < 3; ++q)
        worst = std::max(worst, std::abs(wait.pi.pi[q] - want_wpi[q]));
      const double v11 = r / (mu * (1.0 + r) * r1) -
                         cpi * (1.0 + r + r * r * r) / (mu * (1.0 + r) * (1.0 + r));
      worst = std::max(worst, std::abs(wait.v[1][1] - v11) / std::abs(v11));
    }
    return std::pair{worst < 1e-9,
                     "worst deviation " + fmt(worst, 3) + " across 20 parameter sets"};
  });

  // 5. Stability machinery: negative abscissas, tiny residuals, and the
  // divergent never-reset model.
  run(5, "stability", true, 0.0, [] {
    double worst_absc = -1e300, worst_res = 0.0;
    for (const ReferenceKind kind : {ReferenceKind::LcfsS3State, ReferenceKind::LcfsS2State,
                                     ReferenceKind::LcfsSFake, ReferenceKind::LcfsW}) {
      for (const auto& [l1, l2, mu] :
           {std::tuple{0.5, 0.5, 1.0}, std::tuple{0.8, 0.3, 1.3}, std::tuple{2.0, 0.1, 0.7}}) {
        const auto model = build_reference_model(kind, l1, l2, mu);
        const auto rep = check_stability(model);
        if (!rep.stable) return std::pair{false, to_string(kind) + " reported unstable"};
        worst_absc = std::max(worst_absc, rep.spectral_abscissa);
        worst_res = std::max(worst_res, solve_age(model).residual);
      }
    }
    ShsModel free_age;
    free_age.num_states = 1;
    free_age.cont_dim = 1;
    free_age.b = {{1}};
    free_age.irrelevant = {{}};
    free_age.transitions.push_back({0, 0, 2.0, {{1}}});
    const bool flagged = !check_stability(free_age).stable;
    bool threw = false;
    try {
      solve_age(free_age);
    } catch (const UnstableModel&) {
      threw = true;
    }
    const bool ok = worst_absc < 0.0 && worst_res < 1e-10 && flagged && threw;
    return std::pair{ok, "max abscissa " + fmt(worst_absc) + ", max residual " +
                             fmt(worst_res, 3) + ", never-reset model flagged " +
                             (flagged && threw ? "unstable" : "STABLE")};
  });

  // 6. Transient integration relaxes onto the stationary solution.
  run(6, "transient", true, 0.0, [] {
    const double mu = 1.0;
    const auto model = build_reference_model(ReferenceKind::LcfsS3State, 0.5, 0.5, mu);
    const std::vector<double> pi0{1.0, 0.0, 0.0};
    const std::vector<std::vector<double>> v0(3, std::vector<double>(2, 0.0));
    const auto traj = transient(model, pi0, v0, 200.0 / mu, 0.05);
    const auto want_pi = stationary(model).pi;
    std::size_t k50 = 0;
    while (k50 + 1 < traj.times.size() && traj.times[k50] < 50.0 / mu - 1e-12) ++k50;
    double pi_err = 0.0;
    for (int q = 0; q < 3; ++q)
      pi_err = std::max(pi_err, std::abs(traj.pi_t[k50][q] - want_pi[q]));
    const auto sol = solve_age(model);
    double age_t = 0.0;
    for (int q = 0; q < 3; ++q) age_t += traj.v_t.back()[q][0];
    const double age_err = std::abs(age_t - sol.age);
    const bool ok = pi_err < 1e-6 && age_err < 1e-4;
    return std::pair{ok, "|pi(50)-pi| = " + fmt(pi_err, 3) + ", |age(200)-age| = " +
                             fmt(age_err, 3)};
  });

  // 7. Monte Carlo closure of the simulator against the analytic ages
  // (full level). The multi-source FCFS closed form is an approximation —
  // it treats a delivered update's system time as independent of the
  // backlog it leaves behind — so the exact simulation sits several
  // standard errors above it and this check reports the gap; see README.
  run(7, "sim-closure", opts.full, 300.0, [&opts] {
    struct Leg {
      Discipline d;
      double rho;
    };
    const Leg legs[] = {{Discipline::Fcfs, 0.3},
                        {Discipline::LcfsS, 0.3},
                        {Discipline::LcfsS, 0.5},
                        {Discipline::LcfsW, 0.3},
                        {Discipline::LcfsW, 0.5}};
    bool ok = true;
    std::string d;
    std::uint64_t run_idx = 0;
    for (const Leg& leg : legs) {
      const SourceLoads loads(1.0, {leg.rho, leg.rho});
      SimConfig cfg{loads};
      cfg.discipline = leg.d;
      cfg.horizon = Horizon::count(10'000'000);
      cfg.seed = opts.seed + run_idx++;
      const auto res = simulate(cfg, opts.threads);
      if (!d.empty()) d += "; ";
      d += to_string(leg.d) + "[" + fmt(leg.rho, 3) + "," + fmt(leg.rho, 3) + "] z=";
      for (std::size_t i = 0; i < 2; ++i) {
        const auto& st = res.per_source[i];
        const double want = closed_age(loads, leg.d, i);
        const double z = std::abs(st.age_area - want) / st.stderr_age;
        const bool leg_ok =
            z < 3.0 && std::abs(st.age_area - st.age_ratio) < 0.01 * st.age_area;
        ok = ok && leg_ok;
        d += (i ? "/" : "") + fmt(z, 3);
        if (!leg_ok)
          d += " FAIL(sim " + fmt(st.age_area) + " vs analytic " + fmt(want) + ", se " +
               fmt(st.stderr_age, 3) + ")";
      }
    }
    return std::pair{ok, d};
  });

  // 8. The simulated age-interarrival/waiting cross moment against the
  // closed form (full level). Fails for the same reason as check 7: the
  // exact E[YW] exceeds the closed-form approximation; corr(Y, W) < 0 holds.
  run(8, "sim-yw-moment", opts.full, 0.0, [&opts] {
    const SourceLoads loads(1.0, {0.3, 0.3});
    SimConfig cfg{loads};
    cfg.discipline = Discipline::Fcfs;
    cfg.horizon = Horizon::count(10'000'000);
    cfg.seed = opts.seed + 100;
    const auto est = estimate_eyw(cfg, opts.threads);
    bool ok = true;
    std::string d;
    for (std::size_t i = 0; i < 2; ++i) {
      const double want = fcfs_eyw(loads, i);
      const double z = std::abs(est.mean_yw[i] - want) / est.stderr_yw[i];
      const bool leg_ok = z < 3.0 && est.corr_yw[i] < 0.0;
      ok = ok && leg_ok;
      if (!d.empty()) d += "; ";
      d += "src" + std::to_string(i) + " E[YW] " + fmt(est.mean_yw[i]) + " vs " + fmt(want) +
           " (z=" + fmt(z, 3) + "), corr=" + fmt(est.corr_yw[i], 3);
    }
    return std::pair{ok, d};
  });

  // 9. Bounds of the waiting-coefficient function.
  run(9, "alpha-w-bounds", true, 0.0, [] {
    bool ok = alpha_w(0.0) == 1.0;
    double lo = 2.0, hi = 0.0;
    for (int k = 0; k < 10'000; ++k) {
      const double rho = 100.0 * static_cast<double>(k) / 9999.0;
      const double a = alpha_w(rho);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
      ok = ok && a > 0.837 && a < 1.09;
    }
    return std::pair{ok, "alpha_w range [" + fmt(lo) + ", " + fmt(hi) +
                             "] over 10000 samples, alpha_w(0)=" + fmt(alpha_w(0.0), 17)};
  });

  // 10. Symmetric large-N optimum and discipline ratios.
  run(10, "large-n-limits", true, 0.0, [] {
    bool ok = true;
    for (const std::size_t n : {std::size_t{1}, std::size_t{4}, std::size_t{100},
                                std::size_t{10'000}}) {
      const double s = std::sqrt(static_cast<double>(n));
      ok = ok && fcfs_optimal_symmetric_load(n) == s / (s + 1.0);
    }
    ok = ok && fcfs_optimal_symmetric_load(10'000) == 100.0 / 101.0;
    const double rho = fcfs_optimal_symmetric_load(10'000);
    const auto ages = large_n_ages(rho, 10'000, 1.0);
    const double rw = ages.lcfs_w / ages.fcfs, rs = ages.lcfs_s / ages.fcfs;
    ok = ok && ages.fcfs_valid && std::abs(rw - 1.5) < 0.05 * 1.5 &&
         std::abs(rs - 2.0) < 0.05 * 2.0;
    return std::pair{ok, "rho*_1e4 = " + fmt(rho, 9) + ", ratios W/F = " + fmt(rw) +
                             ", S/F = " + fmt(rs)};
  });

  // 11. Crossover predicate vs the direct closed-form comparison.
  run(11, "crossover", true, 0.0, [] {
    std::mt19937 rng(20240817);
    std::uniform_real_distribution<double> load(0.01, 2.0);
    std::uniform_int_distribution<int> nsrc(1, 5);
    int agree = 0;
    for (int t = 0; t < 1000; ++t) {
      const int n = nsrc(rng);
      std::vector<double> rhos(static_cast<std::size_t>(n));
      for (double& r : rhos) r = load(rng);
      const SourceLoads loads(2.0, rhos);
      double sum_s = 0.0, sum_w = 0.0;
      for (std::size_t i = 0; i < loads.size(); ++i) {
        sum_s += lcfs_s_age(loads, i);
        sum_w += lcfs_w_age(loads, i);
      }
      if (crossover(loads) == (sum_w < sum_s)) ++agree;
    }
    return std::pair{agree == 1000, fmt(agree, 4) + "/1000 load vectors agree"};
  });

  return results;
}

inline nlohmann::json verification_report(const std::vector<CheckResult>& checks,
                                          const VerifyOptions& opts) {
  nlohmann::json j;
  j["level"] = opts.full ? "full" : "fast";
  bool all = true;
  nlohmann::json arr = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& c : checks) {
    arr.push_back({{"criterion", c.criterion},
                   {"name", c.name},
                   {"passed", c.passed},
                   {"detail", c.detail},
                   {"seconds", c.seconds}});
    if (!c.passed) failures.push_back(c.name);
    all = all && c.passed;
  }
  j["checks"] = std::move(arr);
  j["failures"] = std::move(failures);
  j["passed"] = all;
  return j;
}

}  // namespace aoi
