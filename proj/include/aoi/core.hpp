#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aoi/errors.hpp"

namespace aoi {

// Service rate mu shared by all sources plus per-source offered loads
// rho_i = lambda_i / mu. Immutable after construction; all age formulas
// are written in (rho_i, 1/mu) so the 1/mu scaling stays a testable
// property.
struct SourceLoads {
  double mu = 1.0;
  std::vector<double> rhos;

  SourceLoads() = default;
  SourceLoads(double mu_, std::vector<double> rhos_) : mu(mu_), rhos(std::move(rhos_)) {
    if (!(mu > 0.0)) throw std::invalid_argument("SourceLoads: mu must be > 0");
    if (rhos.empty()) throw std::invalid_argument("SourceLoads: need at least one source");
    for (double r : rhos)
      if (!(r > 0.0)) throw std::invalid_argument("SourceLoads: every rho_i must be > 0");
  }

  std::size_t size() const { return rhos.size(); }

  // Total offered load rho = sum_i rho_i.
  double total() const { return std::accumulate(rhos.begin(), rhos.end(), 0.0); }

  // Aggregate other-source load rho_{-i} = rho - rho_i. Computed as the
  // difference so that rhos[i] + other(i) stays within one ulp of total().
  double other(std::size_t i) const {
    check_index(i);
    return total() - rhos[i];
  }

  // Arrival rate of source i.
  double lambda(std::size_t i) const {
    check_index(i);
    return rhos[i] * mu;
  }

  void check_index(std::size_t i) const {
    if (i >= rhos.size()) throw std::out_of_range("SourceLoads: source index out of range");
  }
};

inline double total_load(const SourceLoads& loads) { return loads.total(); }
inline double other_load(const SourceLoads& loads, std::size_t i) { return loads.other(i); }

// Queue discipline taxonomy: lossless FCFS, LCFS with preemption in
// service, LCFS with preemption only in waiting.
enum class Discipline { Fcfs, LcfsS, LcfsW };

inline std::string to_string(Discipline d) {
  switch (d) {
    case Discipline::Fcfs: return "fcfs";
    case Discipline::LcfsS: return "lcfs-s";
    case Discipline::LcfsW: return "lcfs-w";
  }
  throw std::logic_error("unreachable discipline");
}

inline Discipline parse_discipline(const std::string& s) {
  if (s == "fcfs") return Discipline::Fcfs;
  if (s == "lcfs-s") return Discipline::LcfsS;
  if (s == "lcfs-w") return Discipline::LcfsW;
  throw std::invalid_argument("unknown discipline: " + s);
}

// Per-source average ages, indexed like SourceLoads::rhos.
using AgeVector = std::vector<double>;

inline void to_json(nlohmann::json& j, const SourceLoads& loads) {
  j = nlohmann::json{{"mu", loads.mu}, {"rhos", loads.rhos}};
}

inline void from_json(const nlohmann::json& j, SourceLoads& loads) {
  loads = SourceLoads(j.at("mu").get<double>(), j.at("rhos").get<std::vector<double>>());
}

}  // namespace aoi
