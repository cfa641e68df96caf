#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aoi/errors.hpp"

// Piecewise-linear stochastic hybrid system for age processes: a finite
// ergodic discrete state q paired with a continuous vector x of n+1 age
// components. In state q, x grows at the binary rate vector b_q; transition
// l fires at rate lambda^(l), moves q_l -> q'_l, and resets x' = x A_l with
// a binary matrix A_l holding at most one 1 per column. Component x_0 is
// the monitor age and grows in every state.

namespace aoi {

// Binary reset matrix, row-major: reset[r][c] = 1 routes x_r into x'_c.
using ResetMatrix = std::vector<std::vector<int>>;

struct ShsTransition {
  int from = 0;
  int to = 0;
  double rate = 0.0;
  ResetMatrix reset;
};

struct ShsModel {
  int num_states = 0;  // m+1
  int cont_dim = 0;    // n+1
  std::vector<std::vector<int>> b;           // per-state growth vectors, {0,1}^{n+1}
  std::vector<std::vector<int>> irrelevant;  // per-state index sets I_q (sorted)
  std::vector<ShsTransition> transitions;
};

// Structural validation of the modeling conventions. Returns the list of
// violations (empty means the model is well-formed):
//   - shape/range consistency of b, irrelevant, transitions;
//   - every rate > 0; reset entries binary; at most one 1 per reset column;
//   - [b_q]_0 = 1 in every state (the monitor age always grows);
//   - irrelevant components j in I_q have [b_q]_j = 0 and an all-zero
//     column j in the reset of every transition entering q;
//   - the state graph is strongly connected.
inline std::vector<std::string> validate(const ShsModel& model) {
  std::vector<std::string> bad;
  const int m1 = model.num_states, n1 = model.cont_dim;
  if (m1 < 1) bad.push_back("num_states must be >= 1");
  if (n1 < 1) bad.push_back("cont_dim must be >= 1");
  if (m1 < 1 || n1 < 1) return bad;

  if (static_cast<int>(model.b.size()) != m1) bad.push_back("b must have one vector per state");
  if (static_cast<int>(model.irrelevant.size()) != m1)
    bad.push_back("irrelevant must have one set per state");
  if (!bad.empty()) return bad;

  for (int q = 0; q < m1; ++q) {
    if (static_cast<int>(model.b[q].size()) != n1) {
      bad.push_back("b[" + std::to_string(q) + "] has wrong dimension");
      continue;
    }
    for (int j = 0; j < n1; ++j)
      if (model.b[q][j] != 0 && model.b[q][j] != 1)
        bad.push_back("b[" + std::to_string(q) + "] is not binary");
    if (model.b[q][0] != 1)
      bad.push_back("state " + std::to_string(q) + ": component 0 must grow ([b_q]_0 = 1)");
    for (int j : model.irrelevant[q]) {
      if (j < 0 || j >= n1) {
        bad.push_back("state " + std::to_string(q) + ": irrelevant index out of range");
        continue;
      }
      if (model.b[q][j] != 0)
        bad.push_back("state " + std::to_string(q) + ": irrelevant component " +
                      std::to_string(j) + " must have zero growth");
    }
  }

  for (std::size_t l = 0; l < model.transitions.size(); ++l) {
    const auto& t = model.transitions[l];
    const std::string tag = "transition " + std::to_string(l + 1);
    if (t.from < 0 || t.from >= m1 || t.to < 0 || t.to >= m1) {
      bad.push_back(tag + ": state out of range");
      continue;
    }
    if (!(t.rate > 0.0)) bad.push_back(tag + ": rate must be > 0");
    if (static_cast<int>(t.reset.size()) != n1) {
      bad.push_back(tag + ": reset has wrong shape");
      continue;
    }
    bool shape_ok = true;
    for (const auto& row : t.reset)
      if (static_cast<int>(row.size()) != n1) shape_ok = false;
    if (!shape_ok) {
      bad.push_back(tag + ": reset has wrong shape");
      continue;
    }
    for (int c = 0; c < n1; ++c) {
      int ones = 0;
      for (int r = 0; r < n1; ++r) {
        const int e = t.reset[r][c];
        if (e != 0 && e != 1) bad.push_back(tag + ": reset entry not binary");
        ones += (e == 1);
      }
      if (ones > 1) bad.push_back(tag + ": reset column multiplicity (column " +
                                  std::to_string(c) + " has " + std::to_string(ones) + " ones)");
    }
    // Irrelevant components of the destination state must not receive age.
    for (int j : model.irrelevant[t.to]) {
      if (j < 0 || j >= n1) continue;
      for (int r = 0; r < n1; ++r)
        if (t.reset[r][j] == 1)
          bad.push_back(tag + ": resets irrelevant component " + std::to_string(j) +
                        " of state " + std::to_string(t.to));
    }
  }

  // Strong connectivity: every state reachable from state 0 and vice versa.
  auto reach = [&](bool forward) {
    std::vector<char> seen(m1, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const int q = stack.back();
      stack.pop_back();
      for (const auto& t : model.transitions) {
        const int a = forward ? t.from : t.to;
        const int b2 = forward ? t.to : t.from;
        if (a == q && !seen[b2]) {
          seen[b2] = 1;
          stack.push_back(b2);
        }
      }
    }
    return seen;
  };
  const auto fwd = reach(true), bwd = reach(false);
  for (int q = 0; q < m1; ++q)
    if (!fwd[q] || !bwd[q]) {
      bad.push_back("not irreducible: state graph is not strongly connected");
      break;
    }
  return bad;
}

inline void require_valid(const ShsModel& model) {
  auto bad = validate(model);
  if (!bad.empty()) {
    std::string msg = "invalid SHS model:";
    for (const auto& s : bad) msg += "\n  - " + s;
    throw std::invalid_argument(msg);
  }
}

enum class ReferenceKind { LcfsS3State, LcfsS2State, LcfsSFake, LcfsW };

inline std::string to_string(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::LcfsS3State: return "lcfs_s_3state";
    case ReferenceKind::LcfsS2State: return "lcfs_s_2state";
    case ReferenceKind::LcfsSFake: return "lcfs_s_fake";
    case ReferenceKind::LcfsW: return "lcfs_w";
  }
  throw std::logic_error("unreachable reference kind");
}

inline ReferenceKind parse_reference_kind(const std::string& s) {
  if (s == "lcfs_s_3state") return ReferenceKind::LcfsS3State;
  if (s == "lcfs_s_2state") return ReferenceKind::LcfsS2State;
  if (s == "lcfs_s_fake") return ReferenceKind::LcfsSFake;
  if (s == "lcfs_w") return ReferenceKind::LcfsW;
  throw std::invalid_argument("unknown reference model kind: " + s);
}

namespace detail {
// Reset matrix from the positions of its 1 entries.
inline ResetMatrix reset_from_ones(int n1, std::initializer_list<std::pair<int, int>> ones) {
  ResetMatrix a(n1, std::vector<int>(n1, 0));
  for (auto [r, c] : ones) a[r][c] = 1;
  return a;
}
}  // namespace detail

// The two-source reference models tracking the age of source 1 at the
// monitor (x_0), with source-2 traffic as interference. lambda2 == 0 is
// allowed and drops the affected transitions, degenerating the model to a
// single source.
//
//   lcfs_s_3state: LCFS-S, states (idle, serving source 1, serving source 2),
//                  x = (monitor age, in-service age); 7 transitions.
//   lcfs_s_2state: LCFS-S, states (idle, busy) with source-2 service carried
//                  as a fake update (x1' = x0); 5 transitions.
//   lcfs_s_fake:   LCFS-S, single always-busy state; every completion leaves
//                  a fresh fake update in service; 3 self-transitions.
//   lcfs_w:        LCFS-W, states (empty, serving, serving+waiting),
//                  x = (monitor age, in-service age, waiting age); 8
//                  transitions, fake-update convention for source 2.
inline ShsModel build_reference_model(ReferenceKind kind, double lambda1, double lambda2,
                                      double mu) {
  if (!(lambda1 > 0.0)) throw std::invalid_argument("build_reference_model: lambda1 must be > 0");
  if (lambda2 < 0.0) throw std::invalid_argument("build_reference_model: lambda2 must be >= 0");
  if (!(mu > 0.0)) throw std::invalid_argument("build_reference_model: mu must be > 0");
  using detail::reset_from_ones;
  ShsModel model;
  auto add = [&model](int from, int to, double rate, ResetMatrix reset) {
    if (rate > 0.0) model.transitions.push_back({from, to, rate, std::move(reset)});
  };

  switch (kind) {
    case ReferenceKind::LcfsS3State: {
      model.cont_dim = 2;
      if (lambda2 > 0.0) {
        model.num_states = 3;
        model.b = {{1, 0}, {1, 1}, {1, 0}};
        model.irrelevant = {{1}, {}, {1}};
      } else {
        // Single source: the serving-source-2 state is unreachable; drop it.
        model.num_states = 2;
        model.b = {{1, 0}, {1, 1}};
        model.irrelevant = {{1}, {}};
      }
      add(0, 1, lambda1, reset_from_ones(2, {{0, 0}}));  // fresh source-1 into service
      add(0, 2, lambda2, reset_from_ones(2, {{0, 0}}));  // source-2 into service
      add(1, 0, mu, reset_from_ones(2, {{1, 0}}));       // deliver: x0' = x1
      add(1, 1, lambda1, reset_from_ones(2, {{0, 0}}));  // preempt with fresh source 1
      add(1, 2, lambda2, reset_from_ones(2, {{0, 0}}));  // preempt with source 2
      if (lambda2 > 0.0) {
        add(2, 0, mu, reset_from_ones(2, {{0, 0}}));       // source-2 completion: no reset
        add(2, 1, lambda1, reset_from_ones(2, {{0, 0}}));  // preempt source 2
      }
      break;
    }
    case ReferenceKind::LcfsS2State: {
      model.num_states = 2;
      model.cont_dim = 2;
      model.b = {{1, 0}, {1, 1}};
      model.irrelevant = {{1}, {}};
      add(0, 1, lambda1, reset_from_ones(2, {{0, 0}}));          // fresh source-1 into service
      add(0, 1, lambda2, reset_from_ones(2, {{0, 0}, {0, 1}}));  // fake: x1' = x0
      add(1, 0, mu, reset_from_ones(2, {{1, 0}}));               // deliver: x0' = x1
      add(1, 1, lambda1, reset_from_ones(2, {{0, 0}}));          // preempt with fresh source 1
      add(1, 1, lambda2, reset_from_ones(2, {{0, 0}, {0, 1}}));  // preempt with fake
      break;
    }
    case ReferenceKind::LcfsSFake: {
      model.num_states = 1;
      model.cont_dim = 2;
      model.b = {{1, 1}};
      model.irrelevant = {{}};
      add(0, 0, lambda1, reset_from_ones(2, {{0, 0}}));          // fresh source-1 into service
      add(0, 0, lambda2, reset_from_ones(2, {{0, 0}, {0, 1}}));  // fake source-2 update
      add(0, 0, mu, reset_from_ones(2, {{1, 0}, {1, 1}}));       // deliver; completed stays as fake
      break;
    }
    case ReferenceKind::LcfsW: {
      model.num_states = 3;
      model.cont_dim = 3;
      model.b = {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}};
      model.irrelevant = {{1, 2}, {2}, {}};
      add(0, 1, lambda1, reset_from_ones(3, {{0, 0}}));                  // x' = (x0, 0, 0)
      add(0, 1, lambda2, reset_from_ones(3, {{0, 0}, {0, 1}}));          // x' = (x0, x0, 0)
      add(1, 0, mu, reset_from_ones(3, {{1, 0}}));                       // x' = (x1, 0, 0)
      add(1, 2, lambda1, reset_from_ones(3, {{0, 0}, {1, 1}}));          // x' = (x0, x1, 0)
      add(1, 2, lambda2, reset_from_ones(3, {{0, 0}, {1, 1}, {1, 2}}));  // x' = (x0, x1, x1)
      add(2, 1, mu, reset_from_ones(3, {{1, 0}, {2, 1}}));               // x' = (x1, x2, 0)
      add(2, 2, lambda1, reset_from_ones(3, {{0, 0}, {1, 1}}));          // x' = (x0, x1, 0)
      add(2, 2, lambda2, reset_from_ones(3, {{0, 0}, {1, 1}, {1, 2}}));  // x' = (x0, x1, x1)
      break;
    }
  }
  require_valid(model);
  return model;
}

// JSON schema:
//   {"num_states": m1, "cont_dim": n1, "b": [[0|1,..],..],
//    "irrelevant": [[idx,..],..],
//    "transitions": [{"from": q, "to": q2, "rate": f,
//                     "reset": [[r,c],..]  /* positions of 1s */}, ..]}
inline void to_json(nlohmann::json& j, const ShsModel& model) {
  nlohmann::json trans = nlohmann::json::array();
  for (const auto& t : model.transitions) {
    nlohmann::json ones = nlohmann::json::array();
    for (int r = 0; r < model.cont_dim; ++r)
      for (int c = 0; c < model.cont_dim; ++c)
        if (t.reset[r][c] == 1) ones.push_back({r, c});
    trans.push_back(
        {{"from", t.from}, {"to", t.to}, {"rate", t.rate}, {"reset", std::move(ones)}});
  }
  j = nlohmann::json{{"num_states", model.num_states},
                     {"cont_dim", model.cont_dim},
                     {"b", model.b},
                     {"irrelevant", model.irrelevant},
                     {"transitions", std::move(trans)}};
}

inline void from_json(const nlohmann::json& j, ShsModel& model) {
  model.num_states = j.at("num_states").get<int>();
  model.cont_dim = j.at("cont_dim").get<int>();
  model.b = j.at("b").get<std::vector<std::vector<int>>>();
  model.irrelevant = j.at("irrelevant").get<std::vector<std::vector<int>>>();
  model.transitions.clear();
  for (const auto& jt : j.at("transitions")) {
    ShsTransition t;
    t.from = jt.at("from").get<int>();
    t.to = jt.at("to").get<int>();
    t.rate = jt.at("rate").get<double>();
    t.reset.assign(model.cont_dim, std::vector<int>(model.cont_dim, 0));
    for (const auto& rc : jt.at("reset")) {
      const int r = rc.at(0).get<int>(), c = rc.at(1).get<int>();
      if (r < 0 || r >= model.cont_dim || c < 0 || c >= model.cont_dim)
        throw std::invalid_argument("ShsModel JSON: reset position out of range");
      t.reset[r][c] = 1;
    }
    model.transitions.push_back(std::move(t));
  }
}

}  // namespace aoi
