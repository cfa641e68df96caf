#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aoi/errors.hpp"
#include "aoi/shs_model.hpp"

// Numerical machinery for the age SHS: stationary distribution of the
// discrete chain, the block matrices D/B/R of the age fixed point
// v D = pi B + v R, the spectral-abscissa stability test on the relevant
// coordinates, the stationary age solve (age = sum_q v_{q0}), and
// fixed-step integration of the transient ODEs
//   pi'  = pi (incoming rates - outgoing rates)
//   v_q' = b_q pi_q + sum_incoming rate * (v_source A) - v_q d_q.

namespace aoi {

struct StationaryDist {
  std::vector<double> pi;
};

struct StabilityReport {
  bool stable = false;
  double spectral_abscissa = 0.0;  // max Re eig(R_hat - D_hat), relevant coordinates
};

struct AgeSolution {
  StationaryDist pi;
  std::vector<std::vector<double>> v;  // v[q][j]; exactly 0 at irrelevant (q, j)
  double age = 0.0;                    // sum_q v[q][0]
  bool stable = false;
  double spectral_abscissa = 0.0;
  double residual = 0.0;  // max-abs residual of v D = pi B + v R
};

struct SystemMatrices {
  Eigen::MatrixXd d;      // diagonal, (m1 n1) x (m1 n1): departure rate per state, repeated
  Eigen::MatrixXd b_mat;  // m1 x (m1 n1): block row-diagonal growth vectors
  Eigen::MatrixXd r;      // (m1 n1) x (m1 n1): blocks R_ik = sum rates * resets
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> pi_t;              // per sample: length m1
  std::vector<std::vector<std::vector<double>>> v_t;  // per sample: [q][j]
};

namespace detail {

// Total outgoing rate per state (self-transitions included).
inline std::vector<double> departure_rates(const ShsModel& model) {
  std::vector<double> d(model.num_states, 0.0);
  for (const auto& t : model.transitions) d[t.from] += t.rate;
  return d;
}

// Relevant coordinates (q, j) with j not in I_q, in flattened q*n1+j order.
inline std::vector<std::pair<int, int>> relevant_coords(const ShsModel& model) {
  std::vector<std::pair<int, int>> coords;
  for (int q = 0; q < model.num_states; ++q) {
    std::vector<char> irr(model.cont_dim, 0);
    for (int j : model.irrelevant[q]) irr[j] = 1;
    for (int j = 0; j < model.cont_dim; ++j)
      if (!irr[j]) coords.emplace_back(q, j);
  }
  return coords;
}

// Stationary row vector of a generator-like rate matrix: pi G = 0 with the
// normalization sum(pi) = 1 replacing one balance equation. G(q, q') holds
// the q -> q' rate for q' != q and -d_q on the diagonal.
inline std::vector<double> solve_stationary(const Eigen::MatrixXd& gen) {
  const int m = static_cast<int>(gen.rows());
  Eigen::MatrixXd gt = gen.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> rank_lu(gt);
  if (rank_lu.rank() < m - 1)
    throw SingularChain("stationary: balance system rank " + std::to_string(rank_lu.rank()) +
                        " is deficient beyond the expected null direction");
  gt.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  Eigen::VectorXd pi = gt.partialPivLu().solve(rhs);
  std::vector<double> out(m);
  for (int q = 0; q < m; ++q) {
    double p = pi(q);
    if (p < 0.0) {
      if (p < -1e-12)
        throw SingularChain("stationary: negative probability " + std::to_string(p));
      p = 0.0;
    }
    out[q] = p;
  }
  return out;
}

// Finalize a raw age solve: clamp FP residue in (-slack, 0) to zero, reject
// anything more negative as a modeling error.
inline void clamp_nonnegative(std::vector<std::vector<double>>& v, double slack = 1e-8) {
  for (auto& row : v)
    for (double& x : row) {
      if (x < 0.0) {
        if (x < -slack)
          throw NegativeSolution("solve_age: correlation entry " + std::to_string(x) +
                                 " below -" + std::to_string(slack) +
                                 " (no non-negative solution; modeling error)");
        x = 0.0;
      }
    }
}

}  // namespace detail

// Stationary distribution of the discrete chain (self-transitions cancel).
inline StationaryDist stationary(const ShsModel& model) {
  require_valid(model);
  const int m1 = model.num_states;
  Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(m1, m1);
  const auto d = detail::departure_rates(model);
  for (const auto& t : model.transitions) gen(t.from, t.to) += t.rate;
  for (int q = 0; q < m1; ++q) gen(q, q) -= d[q];
  return StationaryDist{detail::solve_stationary(gen)};
}

// Block matrices of the fixed point v D = pi B + v R.
inline SystemMatrices assemble(const ShsModel& model) {
  require_valid(model);
  const int m1 = model.num_states, n1 = model.cont_dim;
  const int M = m1 * n1;
  SystemMatrices s;
  s.d = Eigen::MatrixXd::Zero(M, M);
  s.b_mat = Eigen::MatrixXd::Zero(m1, M);
  s.r = Eigen::MatrixXd::Zero(M, M);
  const auto d = detail::departure_rates(model);
  for (int q = 0; q < m1; ++q)
    for (int j = 0; j < n1; ++j) {
      s.d(q * n1 + j, q * n1 + j) = d[q];
      s.b_mat(q, q * n1 + j) = model.b[q][j];
    }
  for (const auto& t : model.transitions)
    for (int r = 0; r < n1; ++r)
      for (int c = 0; c < n1; ++c)
        if (t.reset[r][c] == 1) s.r(t.from * n1 + r, t.to * n1 + c) += t.rate;
  return s;
}

// Stability of the age fixed point: max real part of the eigenvalues of
// R_hat - D_hat restricted to relevant coordinates must be negative.
inline StabilityReport check_stability(const ShsModel& model) {
  require_valid(model);
  const auto coords = detail::relevant_coords(model);
  const int K = static_cast<int>(coords.size());
  const int n1 = model.cont_dim;
  std::vector<int> slot(model.num_states * n1, -1);
  for (int k = 0; k < K; ++k) slot[coords[k].first * n1 + coords[k].second] = k;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(K, K);
  const auto d = detail::departure_rates(model);
  for (int k = 0; k < K; ++k) a(k, k) -= d[coords[k].first];
  for (const auto& t : model.transitions)
    for (int r = 0; r < n1; ++r)
      for (int c = 0; c < n1; ++c)
        if (t.reset[r][c] == 1) {
          const int kr = slot[t.from * n1 + r], kc = slot[t.to * n1 + c];
          if (kr >= 0 && kc >= 0) a(kr, kc) += t.rate;
        }

  Eigen::EigenSolver<Eigen::MatrixXd> eig(a, /*computeEigenvectors=*/false);
  if (eig.info() != Eigen::Success)
    throw AoiError("check_stability: eigenvalue computation failed");
  double abscissa = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) abscissa = std::max(abscissa, eig.eigenvalues()(k).real());
  // Marginal models have an exact-zero top eigenvalue; leave FP headroom so
  // roundoff never misreads it as contraction.
  const double dmax = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
  const double tol = 1e-12 * std::max(1.0, dmax);
  return StabilityReport{abscissa < -tol, abscissa};
}

// Stationary age solve: v_q d_q = b_q pi_q + sum over incoming transitions
// rate * (v_source A); age = sum_q v_{q0}. Solved on the relevant
// coordinates (irrelevant entries are identically zero).
inline AgeSolution solve_age(const ShsModel& model) {
  require_valid(model);
  AgeSolution sol;
  sol.pi = stationary(model);
  const auto report = check_stability(model);
  sol.stable = report.stable;
  sol.spectral_abscissa = report.spectral_abscissa;
  if (!report.stable)
    throw UnstableModel("solve_age: spectral abscissa " +
                        std::to_string(report.spectral_abscissa) +
                        " is not negative; age diverges");

  const int m1 = model.num_states, n1 = model.cont_dim;
  const auto coords = detail::relevant_coords(model);
  const int K = static_cast<int>(coords.size());
  std::vector<int> slot(m1 * n1, -1);
  for (int k = 0; k < K; ++k) slot[coords[k].first * n1 + coords[k].second] = k;

  // Reduced (D - R) acting on row vectors; solve its transpose system.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(K, K);
  const auto d = detail::departure_rates(model);
  for (int k = 0; k < K; ++k) a(k, k) = d[coords[k].first];
  for (const auto& t : model.transitions)
    for (int r = 0; r < n1; ++r)
      for (int c = 0; c < n1; ++c)
        if (t.reset[r][c] == 1) {
          const int kr = slot[t.from * n1 + r], kc = slot[t.to * n1 + c];
          if (kr >= 0 && kc >= 0) a(kr, kc) -= t.rate;
        }
  Eigen::VectorXd rhs(K);
  for (int k = 0; k < K; ++k)
    rhs(k) = model.b[coords[k].first][coords[k].second] * sol.pi.pi[coords[k].first];
  Eigen::VectorXd vhat = a.transpose().partialPivLu().solve(rhs);

  sol.v.assign(m1, std::vector<double>(n1, 0.0));
  for (int k = 0; k < K; ++k) sol.v[coords[k].first][coords[k].second] = vhat(k);
  detail::clamp_nonnegative(sol.v);

  sol.age = 0.0;
  for (int q = 0; q < m1; ++q) sol.age += sol.v[q][0];

  // Residual of the full fixed-point identity v D = pi B + v R.
  const auto mats = assemble(model);
  Eigen::RowVectorXd vflat(m1 * n1);
  for (int q = 0; q < m1; ++q)
    for (int j = 0; j < n1; ++j) vflat(q * n1 + j) = sol.v[q][j];
  Eigen::RowVectorXd piflat(m1);
  for (int q = 0; q < m1; ++q) piflat(q) = sol.pi.pi[q];
  sol.residual = (vflat * mats.d - piflat * mats.b_mat - vflat * mats.r)
                     .cwiseAbs()
                     .maxCoeff();
  return sol;
}

// Fixed-step fourth-order integration of the transient distribution and
// correlation-vector ODEs from (pi0, v0) to t_end. Rejects steps larger
// than 0.1 / max departure rate (stiffness guard). Samples every step.
inline Trajectory transient(const ShsModel& model, const std::vector<double>& pi0,
                            const std::vector<std::vector<double>>& v0, double t_end,
                            double dt) {
  require_valid(model);
  const int m1 = model.num_states, n1 = model.cont_dim;
  if (static_cast<int>(pi0.size()) != m1)
    throw std::invalid_argument("transient: pi0 has wrong length");
  double psum = 0.0;
  for (double p : pi0) {
    if (p < 0.0) throw std::invalid_argument("transient: pi0 entries must be >= 0");
    psum += p;
  }
  if (std::abs(psum - 1.0) > 1e-9)
    throw std::invalid_argument("transient: pi0 must sum to 1");
  if (static_cast<int>(v0.size()) != m1)
    throw std::invalid_argument("transient: v0 has wrong shape");
  for (const auto& row : v0)
    if (static_cast<int>(row.size()) != n1)
      throw std::invalid_argument("transient: v0 has wrong shape");
  if (!(dt > 0.0) || !(t_end > 0.0))
    throw std::invalid_argument("transient: dt and t_end must be > 0");

  const auto d = detail::departure_rates(model);
  const double dmax = *std::max_element(d.begin(), d.end());
  if (dt > 0.1 / dmax)
    throw std::invalid_argument("transient: step-size rejection, dt " + std::to_string(dt) +
                                " exceeds 0.1/max(D) = " + std::to_string(0.1 / dmax));

  // Flattened state y = (pi, v).
  const int M = m1 * n1;
  Eigen::VectorXd y(m1 + M);
  for (int q = 0; q < m1; ++q) y(q) = pi0[q];
  for (int q = 0; q < m1; ++q)
    for (int j = 0; j < n1; ++j) y(m1 + q * n1 + j) = v0[q][j];

  auto deriv = [&](const Eigen::VectorXd& s) {
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(m1 + M);
    for (int q = 0; q < m1; ++q) dy(q) = -s(q) * d[q];
    for (int q = 0; q < m1; ++q)
      for (int j = 0; j < n1; ++j)
        dy(m1 + q * n1 + j) = model.b[q][j] * s(q) - s(m1 + q * n1 + j) * d[q];
    for (const auto& t : model.transitions) {
      dy(t.to) += t.rate * s(t.from);
      for (int r = 0; r < n1; ++r)
        for (int c = 0; c < n1; ++c)
          if (t.reset[r][c] == 1) dy(m1 + t.to * n1 + c) += t.rate * s(m1 + t.from * n1 + r);
    }
    return dy;
  };

  Trajectory traj;
  auto record = [&](double t, const Eigen::VectorXd& s) {
    traj.times.push_back(t);
    traj.pi_t.emplace_back(s.data(), s.data() + m1);
    std::vector<std::vector<double>> v(m1, std::vector<double>(n1));
    for (int q = 0; q < m1; ++q)
      for (int j = 0; j < n1; ++j) v[q][j] = s(m1 + q * n1 + j);
    traj.v_t.push_back(std::move(v));
  };

  record(0.0, y);
  double t = 0.0;
  while (t < t_end - 1e-15 * t_end) {
    const double h = std::min(dt, t_end - t);
    const Eigen::VectorXd k1 = deriv(y);
    const Eigen::VectorXd k2 = deriv(y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = deriv(y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = deriv(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
    record(t, y);
  }
  return traj;
}

}  // namespace aoi
