#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "aoi/core.hpp"
#include "aoi/errors.hpp"
#include "aoi/rng.hpp"

// Discrete-event Monte Carlo for the N-source M/M/1 status-update system
// under FCFS, preempt-in-service LCFS, and preempt-in-waiting LCFS.
//
// Each source owns one RNG stream from which both its interarrival gaps and
// the service requirements of its own packets are drawn (service at arrival
// time, in arrival order). Consequences: replications/sources never share
// randomness, and removing a zero-rate source leaves every other source's
// sample path bit-identical.
//
// Per delivered update j of a source the simulator records the interarrival
// Y_j (generation gap to the previously delivered update of that source) and
// the system time T_j, and forms the sawtooth decomposition
// Q_j = Y_j T_j + Y_j^2 / 2. Two age estimators are produced per source:
//   age_area  — exact trapezoid integral of the piecewise-linear age over
//               the measurement window, divided by the window length;
//   age_ratio — (mean(YT) + mean(Y^2)/2) / mean(Y).
// Standard errors come from batch means over the delivery sequence:
// deliveries are aggregated into mini-batches (pairwise-merged so at most 80
// are held), regrouped into <= 20 contiguous batches at the end.

namespace aoi {

enum class HorizonKind { Time, Deliveries };

struct Horizon {
  HorizonKind kind = HorizonKind::Time;
  double t_end = 0.0;            // Time mode: simulated time units
  std::uint64_t deliveries = 0;  // Deliveries mode: total delivered updates, all sources

  static Horizon time(double t) { return Horizon{HorizonKind::Time, t, 0}; }
  static Horizon count(std::uint64_t n) { return Horizon{HorizonKind::Deliveries, 0.0, n}; }
};

struct SimConfig {
  SourceLoads loads;
  Discipline discipline = Discipline::LcfsS;
  Horizon horizon = {};
  double warmup_fraction = 0.1;  // fraction of the horizon discarded, in [0, 1)
  std::uint64_t seed = 1;
  int reps = 1;
  std::size_t queue_cap = 10'000'000;  // FCFS backlog abort threshold
  bool collect_records = false;
};

struct DeliveryRecord {
  int source = 0;
  double gen_time = 0.0;
  double delivery_time = 0.0;
  double interarrival = 0.0;  // Y_j, generation gap between delivered updates
  double system_time = 0.0;   // T_j = delivery - generation
};

struct WaitRecord {
  int source = 0;
  double interarrival = 0.0;  // Y_j
  double wait = 0.0;          // W_j, FCFS queueing delay before service
};

struct SourceStats {
  double age_area = std::numeric_limits<double>::quiet_NaN();
  double age_ratio = std::numeric_limits<double>::quiet_NaN();
  double stderr_age = std::numeric_limits<double>::quiet_NaN();
  double mean_y = std::numeric_limits<double>::quiet_NaN();
  double mean_y2 = std::numeric_limits<double>::quiet_NaN();
  double mean_yt = std::numeric_limits<double>::quiet_NaN();
  double mean_yw = std::numeric_limits<double>::quiet_NaN();  // FCFS only
  double stderr_yw = std::numeric_limits<double>::quiet_NaN();
  double corr_yw = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t deliveries = 0;  // measured records (Y defined)
};

struct SimResult {
  std::vector<SourceStats> per_source;
  double busy_fraction = 0.0;
  double measured_time = 0.0;  // total measurement span over all replications
  std::uint64_t total_deliveries = 0;
  std::vector<std::string> warnings;
  std::vector<DeliveryRecord> records;   // only with collect_records
  std::vector<WaitRecord> wait_records;  // only with collect_records, FCFS
};

inline void validate_config(const SimConfig& cfg) {
  if (cfg.horizon.kind == HorizonKind::Time) {
    if (!(cfg.horizon.t_end > 0.0))
      throw std::invalid_argument("sim: time horizon must be > 0");
  } else if (cfg.horizon.deliveries == 0) {
    throw std::invalid_argument("sim: delivery-count horizon must be > 0");
  }
  if (!(cfg.warmup_fraction >= 0.0) || !(cfg.warmup_fraction < 1.0))
    throw std::invalid_argument("sim: warmup_fraction must lie in [0, 1)");
  if (cfg.reps < 1) throw std::invalid_argument("sim: reps must be >= 1");
  if (cfg.queue_cap < 1) throw std::invalid_argument("sim: queue_cap must be >= 1");
}

namespace detail {

// Mini-batch aggregate for batch-means error estimation.
struct Agg {
  double q = 0.0;   // sum of Q_j
  double y = 0.0;   // sum of Y_j
  double yw = 0.0;  // sum of Y_j W_j (FCFS)
  std::uint64_t n = 0;
};

struct SourceAcc {
  // Age state (lifetime).
  double last_gen = 0.0;  // generation time of the freshest delivered update
  bool has_prev = false;  // some update already delivered for this source
  // Measurement-window state.
  double prev_t = 0.0;
  double age_at_prev = 0.0;
  double area = 0.0;
  // Window moment sums.
  std::uint64_t n = 0;
  double sum_y = 0.0, sum_y2 = 0.0, sum_yt = 0.0;
  double sum_w = 0.0, sum_w2 = 0.0, sum_yw = 0.0;
  // Batch means.
  std::vector<Agg> batches;
  Agg cur;
  std::uint64_t batch_cap = 1024;

  void push_batch(double q, double y, double yw) {
    cur.q += q;
    cur.y += y;
    cur.yw += yw;
    if (++cur.n == batch_cap) {
      batches.push_back(cur);
      cur = Agg{};
      if (batches.size() == 80) {  // merge pairs: halve the count, double the cap
        for (std::size_t i = 0; i < 40; ++i) {
          Agg merged = batches[2 * i];
          merged.q += batches[2 * i + 1].q;
          merged.y += batches[2 * i + 1].y;
          merged.yw += batches[2 * i + 1].yw;
          merged.n += batches[2 * i + 1].n;
          batches[i] = merged;
        }
        batches.resize(40);
        batch_cap *= 2;
      }
    }
  }
};

struct RepOutcome {
  std::vector<SourceAcc> src;
  double span = 0.0;
  double busy_time = 0.0;
  std::uint64_t measured_deliveries = 0;  // records with Y defined
  std::vector<DeliveryRecord> records;
  std::vector<WaitRecord> wait_records;
  bool fcfs = false;
};

// One replication over raw rates. Zero-rate sources are legal here (they
// simply never generate events); the public API validates loads separately.
inline RepOutcome run_rep(const std::vector<double>& lambdas, double mu, Discipline disc,
                          const Horizon& horizon, double warmup_fraction,
                          std::size_t queue_cap, std::uint64_t seed, std::uint64_t rep,
                          bool collect) {
  const int n_src = static_cast<int>(lambdas.size());
  if (n_src == 0) throw std::invalid_argument("sim: no sources");
  bool any_active = false;
  for (double l : lambdas) {
    if (l < 0.0) throw std::invalid_argument("sim: negative arrival rate");
    if (l > 0.0) any_active = true;
  }
  if (!any_active) throw std::invalid_argument("sim: all arrival rates are zero");
  if (!(mu > 0.0)) throw std::invalid_argument("sim: service rate must be > 0");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<Stream> streams;
  streams.reserve(n_src);
  for (int i = 0; i < n_src; ++i)
    streams.push_back(stream_for(seed, rep, static_cast<std::uint64_t>(i)));

  std::vector<double> next_arr(n_src, inf);
  for (int i = 0; i < n_src; ++i)
    if (lambdas[i] > 0.0) next_arr[i] = streams[i].exponential(lambdas[i]);

  struct Packet {
    int source = 0;
    double gen = 0.0;
    double service = 0.0;
  };
  Packet serving;
  bool busy = false;
  double serve_start = 0.0;  // event time service began (exact, no rounding)
  double depart_t = inf;
  std::deque<Packet> fifo;  // FCFS backlog
  Packet waiting;
  bool has_waiting = false;  // LCFS-W slot occupied

  const bool time_mode = horizon.kind == HorizonKind::Time;
  const double warmup_t = time_mode ? warmup_fraction * horizon.t_end : 0.0;
  const std::uint64_t warmup_count =
      time_mode ? 0
                : static_cast<std::uint64_t>(
                      std::floor(warmup_fraction * static_cast<double>(horizon.deliveries)));

  RepOutcome out;
  out.src.resize(static_cast<std::size_t>(n_src));
  out.fcfs = disc == Discipline::Fcfs;

  bool measuring = false;
  double t_w = 0.0;
  double prev_acct = 0.0;  // busy-time accounting checkpoint
  std::uint64_t delivered_global = 0;

  auto begin_measurement = [&](double tw) {
    measuring = true;
    t_w = tw;
    prev_acct = tw;
    for (auto& s : out.src) {
      s.prev_t = tw;
      s.age_at_prev = tw - s.last_gen;
    }
  };
  auto finalize = [&](double tf) {
    for (auto& s : out.src) {
      const double dt = tf - s.prev_t;
      s.area += (s.age_at_prev + 0.5 * dt) * dt;
      s.prev_t = tf;
    }
    if (busy) out.busy_time += tf - prev_acct;
    out.span = tf - t_w;
  };

  if (time_mode ? warmup_t == 0.0 : warmup_count == 0) begin_measurement(0.0);

  while (true) {
    // Next event: earliest arrival vs pending departure; departure wins ties.
    int arr_i = -1;
    double arr_t = inf;
    for (int i = 0; i < n_src; ++i)
      if (next_arr[i] < arr_t) {
        arr_t = next_arr[i];
        arr_i = i;
      }
    const bool is_departure = busy && depart_t <= arr_t;
    const double te = is_departure ? depart_t : arr_t;
    if (te == inf) throw AoiError("sim: no further events (internal)");

    if (time_mode) {
      if (!measuring && te >= warmup_t) begin_measurement(warmup_t);
      if (te >= horizon.t_end) {
        finalize(horizon.t_end);
        break;
      }
    }
    if (measuring) {
      if (busy) out.busy_time += te - prev_acct;
      prev_acct = te;
    }

    if (is_departure) {
      const Packet p = serving;
      auto& s = out.src[static_cast<std::size_t>(p.source)];
      if (measuring) {
        const double dt = te - s.prev_t;
        s.area += (s.age_at_prev + 0.5 * dt) * dt;
        s.prev_t = te;
        s.age_at_prev = te - p.gen;  // sawtooth reset to the system time
        if (s.has_prev) {
          const double y = p.gen - s.last_gen;
          const double t_sys = te - p.gen;
          const double q = y * t_sys + 0.5 * y * y;
          s.n += 1;
          s.sum_y += y;
          s.sum_y2 += y * y;
          s.sum_yt += y * t_sys;
          double yw = 0.0;
          if (out.fcfs) {
            const double w = serve_start - p.gen;  // queueing delay, exactly >= 0
            yw = y * w;
            s.sum_w += w;
            s.sum_w2 += w * w;
            s.sum_yw += yw;
            if (collect) out.wait_records.push_back({p.source, y, w});
          }
          s.push_batch(q, y, yw);
          out.measured_deliveries += 1;
          if (collect) out.records.push_back({p.source, p.gen, te, y, t_sys});
        }
      }
      s.last_gen = p.gen;
      s.has_prev = true;
      delivered_global += 1;

      // Next service.
      busy = false;
      depart_t = inf;
      if (disc == Discipline::Fcfs) {
        if (!fifo.empty()) {
          serving = fifo.front();
          fifo.pop_front();
          busy = true;
          serve_start = te;
          depart_t = te + serving.service;
        }
      } else if (disc == Discipline::LcfsW) {
        if (has_waiting) {
          serving = waiting;
          has_waiting = false;
          busy = true;
          serve_start = te;
          depart_t = te + serving.service;
        }
      }

      if (!time_mode) {
        if (!measuring && delivered_global == warmup_count) {
          begin_measurement(te);
        } else if (measuring && delivered_global >= horizon.deliveries) {
          finalize(te);
          break;
        }
      }
    } else {
      // Arrival: draw the packet's service first, then the next gap.
      const double service = streams[arr_i].exponential(mu);
      next_arr[arr_i] = te + streams[arr_i].exponential(lambdas[arr_i]);
      const Packet p{arr_i, te, service};
      switch (disc) {
        case Discipline::Fcfs:
          if (!busy) {
            serving = p;
            busy = true;
            serve_start = te;
            depart_t = te + p.service;
          } else {
            fifo.push_back(p);
            if (fifo.size() > queue_cap)
              throw AoiError("sim: fcfs backlog exceeded the cap of " +
                             std::to_string(queue_cap) +
                             " packets (offered load >= 1?)");
          }
          break;
        case Discipline::LcfsS:
          serving = p;  // preempt whatever is in service
          busy = true;
          serve_start = te;
          depart_t = te + p.service;
          break;
        case Discipline::LcfsW:
          if (!busy) {
            serving = p;
            busy = true;
            serve_start = te;
            depart_t = te + p.service;
          } else {
            waiting = p;  // replace any waiting update
            has_waiting = true;
          }
          break;
      }
    }
  }
  return out;
}

inline double group_stderr(const std::vector<Agg>& batches, bool ratio_of_q) {
  const std::size_t k = batches.size();
  if (k < 2) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t groups = std::min<std::size_t>(20, k);
  std::vector<double> means;
  means.reserve(groups);
  std::size_t start = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t stop = ((g + 1) * k) / groups;
    Agg acc;
    for (std::size_t i = start; i < stop; ++i) {
      acc.q += batches[i].q;
      acc.y += batches[i].y;
      acc.yw += batches[i].yw;
      acc.n += batches[i].n;
    }
    start = stop;
    if (acc.n == 0) continue;
    means.push_back(ratio_of_q ? acc.q / acc.y : acc.yw / static_cast<double>(acc.n));
  }
  const std::size_t g = means.size();
  if (g < 2) return std::numeric_limits<double>::quiet_NaN();
  double m = 0.0;
  for (double x : means) m += x;
  m /= static_cast<double>(g);
  double ss = 0.0;
  for (double x : means) ss += (x - m) * (x - m);
  return std::sqrt(ss / (static_cast<double>(g - 1) * static_cast<double>(g)));
}

}  // namespace detail

// Run cfg.reps independent replications (optionally on several threads) and
// merge them into pooled estimators. Deterministic for a fixed config,
// regardless of thread count.
inline SimResult simulate(const SimConfig& cfg, int threads = 1) {
  validate_config(cfg);
  const int n_src = static_cast<int>(cfg.loads.size());
  std::vector<double> lambdas(static_cast<std::size_t>(n_src));
  for (int i = 0; i < n_src; ++i) lambdas[static_cast<std::size_t>(i)] = cfg.loads.lambda(i);

  SimResult result;
  if (cfg.discipline == Discipline::Fcfs && cfg.loads.total() >= 1.0)
    result.warnings.push_back(
        "fcfs with total load " + std::to_string(cfg.loads.total()) +
        " >= 1 has no steady state; finite-horizon statistics only");

  std::vector<detail::RepOutcome> outcomes(static_cast<std::size_t>(cfg.reps));
  auto run_range = [&](int first, int step) {
    for (int r = first; r < cfg.reps; r += step)
      outcomes[static_cast<std::size_t>(r)] = detail::run_rep(
          lambdas, cfg.loads.mu, cfg.discipline, cfg.horizon, cfg.warmup_fraction,
          cfg.queue_cap, cfg.seed, static_cast<std::uint64_t>(r), cfg.collect_records);
  };
  const int workers = std::max(1, std::min(threads, cfg.reps));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          run_range(w, workers);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  result.per_source.resize(static_cast<std::size_t>(n_src));
  double span_total = 0.0, busy_total = 0.0;
  for (const auto& o : outcomes) {
    span_total += o.span;
    busy_total += o.busy_time;
    result.total_deliveries += o.measured_deliveries;
  }
  result.measured_time = span_total;
  result.busy_fraction = span_total > 0.0 ? busy_total / span_total : 0.0;

  for (int i = 0; i < n_src; ++i) {
    auto& st = result.per_source[static_cast<std::size_t>(i)];
    double area = 0.0, sy = 0.0, sy2 = 0.0, syt = 0.0, sw = 0.0, sw2 = 0.0, syw = 0.0;
    std::uint64_t n = 0;
    std::vector<detail::Agg> batches;
    for (const auto& o : outcomes) {
      const auto& s = o.src[static_cast<std::size_t>(i)];
      area += s.area;
      sy += s.sum_y;
      sy2 += s.sum_y2;
      syt += s.sum_yt;
      sw += s.sum_w;
      sw2 += s.sum_w2;
      syw += s.sum_yw;
      n += s.n;
      batches.insert(batches.end(), s.batches.begin(), s.batches.end());
      if (s.cur.n > 0) batches.push_back(s.cur);
    }
    st.deliveries = n;
    if (span_total > 0.0) st.age_area = area / span_total;
    if (n > 0) {
      const double dn = static_cast<double>(n);
      st.mean_y = sy / dn;
      st.mean_y2 = sy2 / dn;
      st.mean_yt = syt / dn;
      st.age_ratio = (syt + 0.5 * sy2) / sy;
      st.stderr_age = detail::group_stderr(batches, /*ratio_of_q=*/true);
      if (cfg.discipline == Discipline::Fcfs) {
        st.mean_yw = syw / dn;
        st.stderr_yw = detail::group_stderr(batches, /*ratio_of_q=*/false);
        const double cov = syw - sy * sw / dn;
        const double vy = sy2 - sy * sy / dn;
        const double vw = sw2 - sw * sw / dn;
        if (vy > 0.0 && vw > 0.0) st.corr_yw = cov / std::sqrt(vy * vw);
      }
    }
  }

  if (cfg.collect_records)
    for (auto& o : outcomes) {
      result.records.insert(result.records.end(), o.records.begin(), o.records.end());
      result.wait_records.insert(result.wait_records.end(), o.wait_records.begin(),
                                 o.wait_records.end());
    }
  return result;
}

// Rebuild the two estimators from one source's delivery records. The sawtooth
// is integrated from the first record's delivery instant over exactly
// `observation_span` time units (the age keeps growing past the last record
// if the span extends further).
inline std::pair<double, double> age_from_records(const std::vector<DeliveryRecord>& records,
                                                  double observation_span) {
  if (records.size() < 2)
    throw InsufficientData("age_from_records: need >= 2 records, got " +
                           std::to_string(records.size()));
  if (!(observation_span > 0.0))
    throw std::invalid_argument("age_from_records: observation_span must be > 0");
  double sy = 0.0, sy2 = 0.0, syt = 0.0;
  for (std::size_t j = 0; j < records.size(); ++j) {
    if (j > 0 && records[j].delivery_time < records[j - 1].delivery_time)
      throw std::invalid_argument("age_from_records: records must be ordered by delivery time");
    sy += records[j].interarrival;
    sy2 += records[j].interarrival * records[j].interarrival;
    syt += records[j].interarrival * records[j].system_time;
  }
  const double ratio = (syt + 0.5 * sy2) / sy;

  const double t0 = records[0].delivery_time;
  const double t_end = t0 + observation_span;
  double area = 0.0, prev_t = t0, age_prev = records[0].system_time;
  for (std::size_t j = 1; j < records.size() && records[j].delivery_time <= t_end; ++j) {
    const double dt = records[j].delivery_time - prev_t;
    area += (age_prev + 0.5 * dt) * dt;
    prev_t = records[j].delivery_time;
    age_prev = records[j].system_time;
  }
  if (prev_t < t_end) {
    const double dt = t_end - prev_t;
    area += (age_prev + 0.5 * dt) * dt;
  }
  return {area / observation_span, ratio};
}

struct EywEstimate {
  std::vector<double> mean_yw;
  std::vector<double> stderr_yw;
  std::vector<double> corr_yw;
};

// Sample E[YW] per source under FCFS (the waiting-time correlation identity).
inline EywEstimate estimate_eyw(const SimConfig& cfg, int threads = 1) {
  if (cfg.discipline != Discipline::Fcfs)
    throw std::invalid_argument("estimate_eyw: requires the fcfs discipline");
  if (cfg.loads.total() >= 1.0)
    throw UnstableLoad("estimate_eyw: total load " + std::to_string(cfg.loads.total()) +
                       " is unstable (must be < 1)");
  const SimResult r = simulate(cfg, threads);
  EywEstimate e;
  for (const auto& s : r.per_source) {
    e.mean_yw.push_back(s.mean_yw);
    e.stderr_yw.push_back(s.stderr_yw);
    e.corr_yw.push_back(s.corr_yw);
  }
  return e;
}

}  // namespace aoi
