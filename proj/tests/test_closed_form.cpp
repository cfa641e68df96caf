#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "aoi/closed_form.hpp"
#include "aoi/core.hpp"
#include "aoi/errors.hpp"
#include "aoi/optimize.hpp"

using namespace aoi;

namespace {

// Deterministic uniform grid helper for property tests.
struct Lcg {
  std::uint64_t s;
  explicit Lcg(std::uint64_t seed) : s(seed) {}
  double uniform(double lo, double hi) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return lo + (hi - lo) * static_cast<double>(s >> 11) / 9007199254740992.0;
  }
};

}  // namespace

TEST_CASE("fcfs_age matches frozen two-source values") {
  // Frozen oracles computed independently with 30-digit arithmetic.
  CHECK(fcfs_age(SourceLoads(1.0, {0.306, 0.306}), 0) ==
        Catch::Approx(5.29567960725131827).epsilon(1e-12));
  CHECK(fcfs_age(SourceLoads(1.0, {0.306, 0.306}), 0) == Catch::Approx(5.30).margin(0.01));
  CHECK(fcfs_age(SourceLoads(2.0, {0.306, 0.306}), 0) == Catch::Approx(2.65).margin(0.01));
  CHECK(fcfs_age(SourceLoads(1.0, {0.342, 0.342}), 0) ==
        Catch::Approx(5.43904039966195502).epsilon(1e-12));
  CHECK(fcfs_age(SourceLoads(1.5, {0.2, 0.55}), 0) ==
        Catch::Approx(5.50251486053955190).epsilon(1e-12));
  CHECK(fcfs_age(SourceLoads(1.5, {0.2, 0.55}), 1) ==
        Catch::Approx(3.38464725378787879).epsilon(1e-12));
}

TEST_CASE("fcfs_age rejects unstable and bad inputs") {
  CHECK_THROWS_AS(fcfs_age(SourceLoads(1.0, {0.6, 0.6}), 0), UnstableLoad);
  CHECK_THROWS_AS(fcfs_age(SourceLoads(1.0, {0.5, 0.5}), 0), UnstableLoad);  // rho == 1
  CHECK_THROWS_AS(fcfs_age(SourceLoads(1.0, {0.3, 0.3}), 2), std::out_of_range);
}

TEST_CASE("single-source FCFS age and its minimizer") {
  CHECK(fcfs_single_age(0.531, 1.0) == Catch::Approx(3.48).margin(0.01));
  // Frozen: argmin 0.531010056459569, min value 3.48443533176586.
  auto [rho_star, age_star] =
      golden_section_min([](double r) { return fcfs_single_age(r, 1.0); }, 1e-6, 1.0 - 1e-6);
  CHECK(rho_star > 0.52);
  CHECK(rho_star < 0.54);
  CHECK(rho_star == Catch::Approx(0.531010056459569).margin(1e-5));
  CHECK(age_star == Catch::Approx(3.48443533176586).epsilon(1e-9));
  CHECK_THROWS_AS(fcfs_single_age(1.0, 1.0), UnstableLoad);
  // 1/mu scaling.
  for (double r : {0.1, 0.35, 0.77})
    CHECK(fcfs_single_age(r, 2.0) == Catch::Approx(fcfs_single_age(r, 1.0) / 2.0).epsilon(1e-15));
}

TEST_CASE("N=1 fcfs_age collapses to fcfs_single_age exactly") {
  for (double r : {0.1, 0.25, 0.531, 0.9}) {
    CHECK(fcfs_age(SourceLoads(1.0, {r}), 0) == fcfs_single_age(r, 1.0));
    CHECK(fcfs_age(SourceLoads(3.0, {r}), 0) == fcfs_single_age(r, 3.0));
  }
}

TEST_CASE("lcfs_s_age matches frozen values and the 1/mu limit") {
  CHECK(lcfs_s_age(SourceLoads(1.0, {0.5, 0.5}), 0) == Catch::Approx(4.0).epsilon(1e-15));
  CHECK(lcfs_s_age(SourceLoads(2.0, {0.25, 0.5}), 0) == Catch::Approx(3.5).epsilon(1e-15));
  // Single source, huge load: age -> 1/mu.
  CHECK(lcfs_s_age(SourceLoads(1.0, {1e6}), 0) == Catch::Approx(1.0 + 1e-6).epsilon(1e-12));
  // 1/mu scaling.
  CHECK(lcfs_s_age(SourceLoads(2.0, {1.0, 1.0}), 0) ==
        Catch::Approx(lcfs_s_age(SourceLoads(1.0, {1.0, 1.0}), 0) / 2.0).epsilon(1e-15));
}

TEST_CASE("alpha_w endpoints and bounds") {
  CHECK(alpha_w(0.0) == 1.0);  // exact
  CHECK(alpha_w(1.0) == Catch::Approx(11.0 / 12.0).epsilon(1e-15));
  CHECK(alpha_w(0.2) == Catch::Approx(0.870071684587813620).epsilon(1e-12));
  CHECK(alpha_w(0.5) == Catch::Approx(0.841269841269841270).epsilon(1e-12));
  // 10^4 samples over [0, 100] stay inside the proven bounds.
  for (int k = 0; k <= 10000; ++k) {
    const double rho = 100.0 * k / 10000.0;
    const double a = alpha_w(rho);
    CHECK(a > 0.837);
    CHECK(a < 1.09);
  }
  CHECK_THROWS_AS(alpha_w(-0.1), std::invalid_argument);
}

TEST_CASE("lcfs_w_age matches frozen values") {
  CHECK(lcfs_w_age(SourceLoads(1.0, {0.5, 0.5}), 0) ==
        Catch::Approx(3.91666666666666667).epsilon(1e-13));
  CHECK(lcfs_w_age(SourceLoads(2.0, {0.25, 0.5}), 1) ==
        Catch::Approx(1.75854936569222284).epsilon(1e-12));
  // 1/mu scaling at sampled loads.
  Lcg rng(77);
  for (int t = 0; t < 50; ++t) {
    SourceLoads a(1.0, {rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)});
    SourceLoads b(3.0, a.rhos);
    CHECK(lcfs_w_age(b, 0) == Catch::Approx(lcfs_w_age(a, 0) / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("fcfs_eyw formula, reduction, and the age identity") {
  // Single source: (1/mu^2) rho/(1-rho).
  CHECK(fcfs_eyw(SourceLoads(1.0, {0.5}), 0) == Catch::Approx(1.0).epsilon(1e-14));
  CHECK(fcfs_eyw(SourceLoads(2.0, {0.5}), 0) == Catch::Approx(0.25).epsilon(1e-14));
  CHECK(fcfs_eyw(SourceLoads(1.0, {0.3, 0.3}), 0) ==
        Catch::Approx(3.22157434402332362).epsilon(1e-12));
  CHECK_THROWS_AS(fcfs_eyw(SourceLoads(1.0, {0.7, 0.4}), 0), UnstableLoad);

  // lambda_i E[YW] + 1/mu + 1/lambda_i == fcfs_age to 1e-12 relative.
  Lcg rng(402);
  for (int t = 0; t < 200; ++t) {
    const double mu = rng.uniform(0.5, 3.0);
    const double r1 = rng.uniform(0.02, 0.55);
    const double r2 = rng.uniform(0.02, 0.95 - r1);
    SourceLoads loads(mu, {r1, r2});
    for (std::size_t i : {std::size_t{0}, std::size_t{1}}) {
      const double lam = loads.lambda(i);
      const double lhs = lam * fcfs_eyw(loads, i) + 1.0 / mu + 1.0 / lam;
      CHECK(lhs == Catch::Approx(fcfs_age(loads, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("lcfs_s_moments frozen values and moment identity") {
  auto m = lcfs_s_moments(SourceLoads(1.0, {0.5, 0.5}), 0);
  CHECK(m.expected_t == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(m.expected_d == Catch::Approx(4.0).epsilon(1e-15));
  CHECK(m.expected_d2 == Catch::Approx(28.0).epsilon(1e-13));
  CHECK(m.age == Catch::Approx(4.0).epsilon(1e-13));
  // age field equals E[T] + E[D^2]/(2E[D]) by construction.
  CHECK(m.age == m.expected_t + m.expected_d2 / (2.0 * m.expected_d));

  // Single source rho=1: age = 2.
  CHECK(lcfs_s_moments(SourceLoads(1.0, {1.0}), 0).age == Catch::Approx(2.0).epsilon(1e-13));

  Lcg rng(9001);
  for (int t = 0; t < 300; ++t) {
    const double mu = rng.uniform(0.4, 4.0);
    SourceLoads loads(mu, {rng.uniform(0.05, 2.5), rng.uniform(0.05, 2.5)});
    for (std::size_t i : {std::size_t{0}, std::size_t{1}}) {
      auto mm = lcfs_s_moments(loads, i);
      CHECK(mm.age == Catch::Approx(lcfs_s_age(loads, i)).epsilon(1e-12));
      // Variance non-negativity: E[D^2] >= E[D]^2.
      CHECK(mm.expected_d2 >= mm.expected_d * mm.expected_d * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("large-N ages: frozen values, ratios, scaling") {
  auto a10 = large_n_ages(1.0, 10, 1.0);
  CHECK_FALSE(a10.fcfs_valid);  // rho = 1 infeasible for FCFS
  CHECK(a10.lcfs_s == Catch::Approx(20.0).epsilon(1e-15));
  CHECK(a10.lcfs_w == Catch::Approx(15.0).epsilon(1e-15));
  CHECK(large_n_ages(0.8, 10, 1.0).fcfs == Catch::Approx(18.94).epsilon(1e-12));

  // Ratios at the optimal symmetric load approach 2 and 1.5 (within 5% at N=1e4).
  const std::size_t n = 10000;
  const double rho_star = fcfs_optimal_symmetric_load(n);
  auto big = large_n_ages(rho_star, n, 1.0);
  REQUIRE(big.fcfs_valid);
  CHECK(big.lcfs_s / big.fcfs == Catch::Approx(1.97039117685887).epsilon(1e-10));
  CHECK(big.lcfs_w / big.fcfs == Catch::Approx(1.47780557535706).epsilon(1e-10));
  CHECK(std::abs(big.lcfs_s / big.fcfs - 2.0) < 0.05 * 2.0);
  CHECK(std::abs(big.lcfs_w / big.fcfs - 1.5) < 0.05 * 1.5);

  // mu scaling halves all fields.
  auto h1 = large_n_ages(0.6, 7, 1.0);
  auto h2 = large_n_ages(0.6, 7, 2.0);
  CHECK(h2.fcfs == Catch::Approx(h1.fcfs / 2.0).epsilon(1e-15));
  CHECK(h2.lcfs_s == Catch::Approx(h1.lcfs_s / 2.0).epsilon(1e-15));
  CHECK(h2.lcfs_w == Catch::Approx(h1.lcfs_w / 2.0).epsilon(1e-15));
}

TEST_CASE("fcfs_optimal_symmetric_load closed form") {
  CHECK(fcfs_optimal_symmetric_load(1) == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(fcfs_optimal_symmetric_load(4) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  double prev = 0.0;
  for (std::size_t n : {1ul, 2ul, 10ul, 100ul, 10000ul, 1000000ul}) {
    const double v = fcfs_optimal_symmetric_load(n);
    CHECK(v > prev);
    CHECK(v < 1.0);
    prev = v;
  }
}

TEST_CASE("scale law: age(mu) * mu is independent of mu for all disciplines") {
  Lcg rng(5150);
  for (int t = 0; t < 100; ++t) {
    const double r1 = rng.uniform(0.05, 0.45);
    const double r2 = rng.uniform(0.05, 0.45);
    const double mu_a = rng.uniform(0.2, 1.0), mu_b = rng.uniform(1.0, 8.0);
    SourceLoads a(mu_a, {r1, r2}), b(mu_b, {r1, r2});
    for (auto d : {Discipline::Fcfs, Discipline::LcfsS, Discipline::LcfsW})
      CHECK(closed_age(a, d, 0) * mu_a ==
            Catch::Approx(closed_age(b, d, 0) * mu_b).epsilon(1e-12));
  }
}

TEST_CASE("LCFS ages strictly decrease when all loads scale up") {
  Lcg rng(31337);
  for (int t = 0; t < 100; ++t) {
    const double r1 = rng.uniform(0.05, 1.0);
    const double r2 = rng.uniform(0.05, 1.0);
    const double f = rng.uniform(1.01, 3.0);
    SourceLoads lo(1.0, {r1, r2}), hi(1.0, {f * r1, f * r2});
    CHECK(lcfs_s_age(hi, 0) < lcfs_s_age(lo, 0));
    CHECK(lcfs_s_age(hi, 1) < lcfs_s_age(lo, 1));
    CHECK(lcfs_w_age(hi, 0) < lcfs_w_age(lo, 0));
    CHECK(lcfs_w_age(hi, 1) < lcfs_w_age(lo, 1));
  }
}

TEST_CASE("per-source LCFS-W vs LCFS-S comparison matches the exact predicate") {
  // Exact per-source form: age_W(i) < age_S(i)  iff  rho/rho_i > (1+rho) alpha_w(rho).
  Lcg rng(860);
  for (int t = 0; t < 1000; ++t) {
    SourceLoads loads(rng.uniform(0.3, 3.0), {rng.uniform(0.02, 1.5), rng.uniform(0.02, 1.5)});
    const double rho = loads.total();
    for (std::size_t i : {std::size_t{0}, std::size_t{1}}) {
      const bool direct = lcfs_w_age(loads, i) < lcfs_s_age(loads, i);
      const bool predicate = rho / loads.rhos[i] > (1.0 + rho) * alpha_w(rho);
      CHECK(direct == predicate);
    }
  }
}

TEST_CASE("two-source FCFS age sum is convex along the contour") {
  // Non-negative second differences of f(r1) = age1 + age2 at fixed total rho.
  for (double rho : {0.3, 0.612, 0.9}) {
    const int g = 200;
    std::vector<double> f(g);
    for (int k = 0; k < g; ++k) {
      const double r1 = rho * (0.02 + 0.96 * k / (g - 1));
      SourceLoads loads(1.0, {r1, rho - r1});
      f[k] = fcfs_age(loads, 0) + fcfs_age(loads, 1);
    }
    for (int k = 1; k + 1 < g; ++k)
      CHECK(f[k - 1] - 2.0 * f[k] + f[k + 1] >= -1e-9 * std::abs(f[k]));
  }
}
