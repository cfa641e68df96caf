// aoi: command-line front end for the age-of-information toolkit.
//
// Subcommands: closed (closed-form ages), shs (solve | builtin | transient),
// sim (discrete-event simulation), region (contour | policy-map | min-sum |
// adapt | crossover), verify (cross-validation suite).
//
// Exit codes: 0 success, 1 domain error (e.g. unstable load), 2 usage error.
// Output is JSON on stdout by default; --csv switches tabular commands to
// CSV; --out writes the payload to a file and adds a timestamped sidecar
// manifest <out>.manifest.json. The stdout/file payload itself embeds a
// timestamp-free manifest so identical invocations are byte-identical.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aoi/closed_form.hpp"
#include "aoi/core.hpp"
#include "aoi/errors.hpp"
#include "aoi/region.hpp"
#include "aoi/shs_model.hpp"
#include "aoi/shs_solver.hpp"
#include "aoi/sim.hpp"
#include "aoi/verify.hpp"

namespace {

using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

// Usage problems detected after parsing (e.g. missing --rho/--lambda choice).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

std::vector<double> parse_csv_doubles(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

// Shared --mu/--rho/--lambda trio resolved to SourceLoads.
struct RateFlags {
  double mu = 1.0;
  std::string rho_csv;
  std::string lambda_csv;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mu", mu, "Service rate mu")->required()->check(CLI::PositiveNumber);
    auto* r = cmd->add_option("--rho", rho_csv, "Per-source offered loads rho_i, comma-separated");
    auto* l = cmd->add_option("--lambda", lambda_csv,
                              "Per-source arrival rates lambda_i, comma-separated");
    r->excludes(l);
    l->excludes(r);
  }

  aoi::SourceLoads resolve() const {
    if (rho_csv.empty() && lambda_csv.empty())
      throw UsageError("one of --rho or --lambda is required");
    std::vector<double> vals = rho_csv.empty() ? parse_csv_doubles(lambda_csv, "--lambda")
                                               : parse_csv_doubles(rho_csv, "--rho");
    if (rho_csv.empty())
      for (double& v : vals) v /= mu;
    return aoi::SourceLoads(mu, std::move(vals));
  }
};

int env_threads_cap() {
  const char* env = std::getenv("AOI_THREADS");
  if (env == nullptr || *env == '\0') return 0;  // no cap
  try {
    const int v = std::stoi(env);
    return v >= 1 ? v : 1;
  } catch (const std::exception&) {
    throw UsageError("AOI_THREADS must be a positive integer");
  }
}

// Effective worker count: the --threads request capped by AOI_THREADS.
int resolve_threads(int requested) {
  const int cap = env_threads_cap();
  if (requested < 1) requested = 1;
  return cap > 0 ? std::min(requested, cap) : requested;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

std::string g_command_line;  // set once in main before parsing

json make_manifest(json config, std::optional<std::uint64_t> seed = std::nullopt) {
  json m{{"command", g_command_line}, {"config", std::move(config)}, {"version", kVersion}};
  if (seed) m["seed"] = *seed;
  return m;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw aoi::AoiError("cannot open output file: " + path);
  f << text;
  if (!f.good()) throw aoi::AoiError("failed writing output file: " + path);
}

// Emits the payload to stdout or --out. With --out, a sidecar
// <out>.manifest.json carries the manifest plus wall-clock timestamps,
// keeping the primary output deterministic.
void emit(const std::string& out_path, const json& payload, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  write_file(out_path, text);
  json side = payload.contains("manifest") ? payload.at("manifest") : make_manifest(json::object());
  side["written_at_utc"] = utc_now();
  side["output_file"] = out_path;
  write_file(out_path + ".manifest.json", side.dump(2) + "\n");
}

void emit_json(const std::string& out_path, const json& payload) {
  emit(out_path, payload, payload.dump(2) + "\n");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json age_solution_json(const aoi::AgeSolution& sol) {
  return json{{"age", sol.age},
              {"pi", sol.pi.pi},
              {"v", sol.v},
              {"stable", sol.stable},
              {"spectral_abscissa", sol.spectral_abscissa},
              {"residual", sol.residual}};
}

aoi::ShsModel load_model_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw aoi::AoiError("cannot open model file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw aoi::AoiError("model file " + path + " is not valid JSON: " + e.what());
  }
  try {
    return j.get<aoi::ShsModel>();
  } catch (const json::exception& e) {
    throw aoi::AoiError("model file " + path + " does not match the model schema: " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  g_command_line = join_args(argc, argv);

  CLI::App app{"Age-of-information calculator for multi-source status-update queues"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --out appear after the subcommand name
  app.set_version_flag("--version", kVersion);

  std::string out_path;
  app.add_option("--out", out_path,
                 "Write the output to this file (adds <out>.manifest.json with timestamps)");

  // ---------------------------------------------------------------- closed
  auto* closed = app.add_subcommand("closed", "Closed-form per-source average ages");
  static RateFlags closed_rates;
  static std::string closed_disc = "fcfs";
  closed_rates.attach(closed);
  closed->add_option("--discipline", closed_disc, "Queue discipline")
      ->required()
      ->check(CLI::IsMember({"fcfs", "lcfs-s", "lcfs-w"}));
  closed->callback([&] {
    const aoi::SourceLoads loads = closed_rates.resolve();
    const aoi::Discipline d = aoi::parse_discipline(closed_disc);
    const aoi::AgeVector ages = aoi::closed_ages(loads, d);
    json cfg{{"discipline", closed_disc}, {"mu", loads.mu}, {"rhos", loads.rhos}};
    json payload{{"command", "closed"},
                 {"discipline", closed_disc},
                 {"loads", loads},
                 {"ages", ages},
                 {"manifest", make_manifest(cfg)}};
    emit_json(out_path, payload);
  });

  // ------------------------------------------------------------------- shs
  auto* shs = app.add_subcommand("shs", "Stochastic-hybrid-systems age solver");
  shs->require_subcommand(1);

  auto* shs_solve = shs->add_subcommand("solve", "Solve a model from a JSON file");
  static std::string solve_model_path;
  shs_solve->add_option("--model", solve_model_path, "Model JSON file")->required();
  shs_solve->callback([&] {
    const aoi::ShsModel model = load_model_file(solve_model_path);
    const auto sol = aoi::solve_age(model);
    json payload = age_solution_json(sol);
    payload["command"] = "shs solve";
    payload["manifest"] = make_manifest(json{{"model_file", solve_model_path}});
    emit_json(out_path, payload);
  });

  auto* shs_builtin = shs->add_subcommand("builtin", "Solve a builtin two-source reference model");
  static std::string builtin_kind;
  static double b_l1 = 0.0, b_l2 = 0.0, b_mu = 1.0;
  shs_builtin->add_option("--kind", builtin_kind, "Reference model kind")
      ->required()
      ->check(CLI::IsMember({"lcfs_s_3state", "lcfs_s_2state", "lcfs_s_fake", "lcfs_w"}));
  shs_builtin->add_option("--lambda1", b_l1, "Source 1 arrival rate")
      ->required()
      ->check(CLI::PositiveNumber);
  shs_builtin->add_option("--lambda2", b_l2, "Source 2 arrival rate (0 drops source 2)")
      ->required()
      ->check(CLI::NonNegativeNumber);
  shs_builtin->add_option("--mu", b_mu, "Service rate")->required()->check(CLI::PositiveNumber);
  shs_builtin->callback([&] {
    const auto kind = aoi::parse_reference_kind(builtin_kind);
    const auto sol = aoi::solve_age(aoi::build_reference_model(kind, b_l1, b_l2, b_mu));
    json cfg{{"kind", builtin_kind}, {"lambda1", b_l1}, {"lambda2", b_l2}, {"mu", b_mu}};
    json payload = age_solution_json(sol);
    payload["command"] = "shs builtin";
    payload["kind"] = builtin_kind;
    payload["manifest"] = make_manifest(cfg);
    emit_json(out_path, payload);
  });

  auto* shs_tr = shs->add_subcommand("transient", "Integrate the transient distribution/age ODEs");
  static std::string tr_model_path, tr_kind;
  static double tr_l1 = 0.0, tr_l2 = 0.0, tr_mu = 1.0, tr_tend = 0.0, tr_dt = 0.0;
  static std::size_t tr_stride = 1;
  {
    auto* m = shs_tr->add_option("--model", tr_model_path, "Model JSON file");
    auto* k = shs_tr->add_option("--kind", tr_kind, "Builtin reference model kind")
                  ->check(CLI::IsMember({"lcfs_s_3state", "lcfs_s_2state", "lcfs_s_fake",
                                         "lcfs_w"}));
    m->excludes(k);
    k->excludes(m);
    shs_tr->add_option("--lambda1", tr_l1, "Source 1 arrival rate (builtin kinds)")
        ->check(CLI::PositiveNumber);
    shs_tr->add_option("--lambda2", tr_l2, "Source 2 arrival rate (builtin kinds)")
        ->check(CLI::NonNegativeNumber);
    shs_tr->add_option("--mu", tr_mu, "Service rate (builtin kinds)")->check(CLI::PositiveNumber);
    shs_tr->add_option("--t-end", tr_tend, "Integration horizon")
        ->required()
        ->check(CLI::PositiveNumber);
    shs_tr->add_option("--dt", tr_dt, "Fixed step size (must be <= 0.1/max departure rate)")
        ->required()
        ->check(CLI::PositiveNumber);
    shs_tr->add_option("--stride", tr_stride, "Keep every stride-th sample (default 1)")
        ->check(CLI::PositiveNumber);
  }
  shs_tr->callback([&] {
    aoi::ShsModel model;
    json cfg{{"t_end", tr_tend}, {"dt", tr_dt}, {"stride", tr_stride}};
    if (!tr_model_path.empty()) {
      model = load_model_file(tr_model_path);
      cfg["model_file"] = tr_model_path;
    } else if (!tr_kind.empty()) {
      model = aoi::build_reference_model(aoi::parse_reference_kind(tr_kind), tr_l1, tr_l2, tr_mu);
      cfg["kind"] = tr_kind;
      cfg["lambda1"] = tr_l1;
      cfg["lambda2"] = tr_l2;
      cfg["mu"] = tr_mu;
    } else {
      throw UsageError("shs transient: one of --model or --kind is required");
    }
    // Start from state 0 with probability 1 and all correlations zero.
    std::vector<double> pi0(static_cast<std::size_t>(model.num_states), 0.0);
    pi0[0] = 1.0;
    const std::vector<std::vector<double>> v0(
        static_cast<std::size_t>(model.num_states),
        std::vector<double>(static_cast<std::size_t>(model.cont_dim), 0.0));
    const auto traj = aoi::transient(model, pi0, v0, tr_tend, tr_dt);

    json times = json::array(), pis = json::array(), ages = json::array();
    const std::size_t n = traj.times.size();
    for (std::size_t i = 0; i < n; i += tr_stride) {
      times.push_back(traj.times[i]);
      pis.push_back(traj.pi_t[i]);
      double age = 0.0;
      for (int q = 0; q < model.num_states; ++q)
        age += traj.v_t[i][static_cast<std::size_t>(q)][0];
      ages.push_back(age);
    }
    if ((n - 1) % tr_stride != 0) {
      times.push_back(traj.times[n - 1]);
      pis.push_back(traj.pi_t[n - 1]);
      double age = 0.0;
      for (int q = 0; q < model.num_states; ++q)
        age += traj.v_t[n - 1][static_cast<std::size_t>(q)][0];
      ages.push_back(age);
    }
    json payload{{"command", "shs transient"}, {"times", std::move(times)},
                 {"pi", std::move(pis)},       {"age", std::move(ages)},
                 {"final_v", traj.v_t.back()}, {"manifest", make_manifest(cfg)}};
    emit_json(out_path, payload);
  });

  // ------------------------------------------------------------------- sim
  auto* sim = app.add_subcommand("sim", "Discrete-event simulation of the update queue");
  static RateFlags sim_rates;
  static std::string sim_disc;
  static std::uint64_t sim_horizon = 0, sim_seed = 1;
  static double sim_time = 0.0, sim_warmup = 0.1;
  static int sim_reps = 1, sim_threads = 1;
  static std::size_t sim_queue_cap = 10'000'000;
  static bool sim_records = false, sim_csv = false;
  sim_rates.attach(sim);
  sim->add_option("--discipline", sim_disc, "Queue discipline")
      ->required()
      ->check(CLI::IsMember({"fcfs", "lcfs-s", "lcfs-w"}));
  {
    auto* h = sim->add_option("--horizon", sim_horizon,
                              "Total delivered updates across all sources");
    auto* t = sim->add_option("--time", sim_time, "Simulated time horizon (alternative)")
                  ->check(CLI::PositiveNumber);
    h->excludes(t);
    t->excludes(h);
  }
  sim->add_option("--seed", sim_seed, "Base RNG seed (default 1)");
  sim->add_option("--warmup", sim_warmup, "Warmup fraction discarded, in [0, 1) (default 0.1)");
  sim->add_option("--reps", sim_reps, "Independent replications (default 1)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--queue-cap", sim_queue_cap, "FCFS backlog abort threshold (default 1e7)");
  sim->add_option("--threads", sim_threads,
                  "Worker threads for replications (capped by AOI_THREADS; default 1)");
  sim->add_flag("--records", sim_records, "Collect per-delivery records in the JSON output");
  sim->add_flag("--csv", sim_csv, "Emit delivery records as CSV instead of JSON");
  sim->callback([&] {
    aoi::SimConfig cfg{sim_rates.resolve()};
    cfg.discipline = aoi::parse_discipline(sim_disc);
    if (sim_horizon == 0 && sim_time == 0.0)
      throw UsageError("sim: one of --horizon or --time is required");
    cfg.horizon = sim_time > 0.0 ? aoi::Horizon::time(sim_time) : aoi::Horizon::count(sim_horizon);
    cfg.warmup_fraction = sim_warmup;
    cfg.seed = sim_seed;
    cfg.reps = sim_reps;
    cfg.queue_cap = sim_queue_cap;
    cfg.collect_records = sim_records || sim_csv;
    const int threads = resolve_threads(sim_threads);
    const auto res = aoi::simulate(cfg, threads);

    json cfg_json{{"discipline", sim_disc},
                  {"mu", cfg.loads.mu},
                  {"rhos", cfg.loads.rhos},
                  {"horizon", sim_time > 0.0 ? json{{"time", sim_time}}
                                             : json{{"deliveries", sim_horizon}}},
                  {"warmup_fraction", sim_warmup},
                  {"reps", sim_reps},
                  {"queue_cap", sim_queue_cap},
                  {"threads", threads}};
    const json manifest = make_manifest(cfg_json, sim_seed);

    if (sim_csv) {
      std::string text = "source,gen_time,delivery_time,interarrival,system_time\n";
      for (const auto& r : res.records)
        text += std::to_string(r.source) + "," + num(r.gen_time) + "," + num(r.delivery_time) +
                "," + num(r.interarrival) + "," + num(r.system_time) + "\n";
      emit(out_path, json{{"manifest", manifest}}, text);
      return;
    }

    json sources = json::array();
    for (const auto& st : res.per_source) {
      sources.push_back(json{{"deliveries", st.deliveries},
                             {"age_area", st.age_area},
                             {"age_ratio", st.age_ratio},
                             {"stderr_age", st.stderr_age},
                             {"mean_y", st.mean_y},
                             {"mean_y2", st.mean_y2},
                             {"mean_yt", st.mean_yt},
                             {"mean_yw", st.mean_yw},
                             {"stderr_yw", st.stderr_yw},
                             {"corr_yw", st.corr_yw}});
    }
    json payload{{"command", "sim"},
                 {"per_source", std::move(sources)},
                 {"busy_fraction", res.busy_fraction},
                 {"measured_time", res.measured_time},
                 {"total_deliveries", res.total_deliveries},
                 {"warnings", res.warnings},
                 {"manifest", manifest}};
    if (sim_records) {
      json recs = json::array();
      for (const auto& r : res.records)
        recs.push_back(json{{"source", r.source},
                            {"gen_time", r.gen_time},
                            {"delivery_time", r.delivery_time},
                            {"interarrival", r.interarrival},
                            {"system_time", r.system_time}});
      payload["records"] = std::move(recs);
    }
    emit_json(out_path, payload);
  });

  // ---------------------------------------------------------------- region
  auto* region = app.add_subcommand("region", "Load-region analyses over the closed forms");
  region->require_subcommand(1);

  auto* contour = region->add_subcommand("contour", "Two-source age contour at fixed total load");
  static double ct_total = 0.0, ct_mu = 1.0, ct_margin = 1e-3;
  static std::size_t ct_points = 101;
  static std::string ct_disc;
  static bool ct_csv = false;
  contour->add_option("--total", ct_total, "Total offered load rho")
      ->required()
      ->check(CLI::PositiveNumber);
  contour->add_option("--discipline", ct_disc, "Queue discipline")
      ->required()
      ->check(CLI::IsMember({"fcfs", "lcfs-s", "lcfs-w"}));
  contour->add_option("--mu", ct_mu, "Service rate (default 1)")->check(CLI::PositiveNumber);
  contour->add_option("--points", ct_points, "Sweep points (default 101)");
  contour->add_option("--margin", ct_margin, "Open-interval margin on rho_1/rho (default 1e-3)");
  contour->add_flag("--csv", ct_csv, "Emit CSV (rho1,rho2,age1,age2,discipline)");
  contour->callback([&] {
    const auto d = aoi::parse_discipline(ct_disc);
    const auto grid = aoi::age_contour(ct_total, d, ct_mu, ct_points, ct_margin);
    json cfg{{"total", ct_total}, {"discipline", ct_disc},   {"mu", ct_mu},
             {"points", ct_points}, {"margin", ct_margin}};
    const json manifest = make_manifest(cfg);
    if (ct_csv) {
      std::string text = "rho1,rho2,age1,age2,discipline\n";
      for (const auto& pt : grid.points)
        text += num(pt.rhos[0]) + "," + num(pt.rhos[1]) + "," + num(pt.ages[0]) + "," +
                num(pt.ages[1]) + "," + ct_disc + "\n";
      emit(out_path, json{{"manifest", manifest}}, text);
      return;
    }
    json points = json::array();
    for (const auto& pt : grid.points)
      points.push_back(json{{"rhos", pt.rhos}, {"ages", pt.ages}});
    emit_json(out_path, json{{"command", "region contour"},
                             {"discipline", ct_disc},
                             {"total", ct_total},
                             {"points", std::move(points)},
                             {"manifest", manifest}});
  });

  auto* pmap = region->add_subcommand("policy-map", "Best discipline per (split, total) cell");
  static double pm_rho_min = 0.1, pm_rho_max = 2.0, pm_split_min = 0.1, pm_split_max = 0.9;
  static double pm_mu = 1.0;
  static std::size_t pm_rho_cells = 20, pm_split_cells = 9;
  static bool pm_csv = false;
  pmap->add_option("--rho-min", pm_rho_min, "Lowest total load (default 0.1)")
      ->check(CLI::PositiveNumber);
  pmap->add_option("--rho-max", pm_rho_max, "Highest total load (default 2.0)")
      ->check(CLI::PositiveNumber);
  pmap->add_option("--split-min", pm_split_min, "Lowest rho_1/rho (default 0.1)");
  pmap->add_option("--split-max", pm_split_max, "Highest rho_1/rho (default 0.9)");
  pmap->add_option("--mu", pm_mu, "Service rate (default 1)")->check(CLI::PositiveNumber);
  pmap->add_option("--rho-cells", pm_rho_cells, "Grid cells along total load (default 20)");
  pmap->add_option("--split-cells", pm_split_cells, "Grid cells along the split (default 9)");
  pmap->add_flag("--csv", pm_csv, "Emit CSV (rho1,rho2,age1,age2,discipline)");
  pmap->callback([&] {
    const auto map = aoi::best_policy_map({pm_rho_min, pm_rho_max}, {pm_split_min, pm_split_max},
                                          pm_mu, pm_rho_cells, pm_split_cells);
    json cfg{{"rho_min", pm_rho_min},     {"rho_max", pm_rho_max},
             {"split_min", pm_split_min}, {"split_max", pm_split_max},
             {"mu", pm_mu},               {"rho_cells", pm_rho_cells},
             {"split_cells", pm_split_cells}};
    const json manifest = make_manifest(cfg);
    if (pm_csv) {
      std::string text = "rho1,rho2,age1,age2,discipline\n";
      for (const auto& cell : map.cells) {
        const aoi::SourceLoads loads(pm_mu,
                                     {cell.split * cell.total, (1.0 - cell.split) * cell.total});
        text += num(loads.rhos[0]) + "," + num(loads.rhos[1]) + "," +
                num(aoi::closed_age(loads, cell.best, 0)) + "," +
                num(aoi::closed_age(loads, cell.best, 1)) + "," + aoi::to_string(cell.best) + "\n";
      }
      emit(out_path, json{{"manifest", manifest}}, text);
      return;
    }
    json cells = json::array();
    for (const auto& cell : map.cells)
      cells.push_back(json{{"split", cell.split},
                           {"total", cell.total},
                           {"fcfs_feasible", cell.fcfs_feasible},
                           {"best", aoi::to_string(cell.best)},
                           {"sum_age", cell.sum_age}});
    emit_json(out_path, json{{"command", "region policy-map"},
                             {"splits", map.splits},
                             {"totals", map.totals},
                             {"cells", std::move(cells)},
                             {"manifest", manifest}});
  });

  auto* minsum = region->add_subcommand("min-sum", "Minimize the sum age over equal-split loads");
  static std::string ms_disc;
  static std::size_t ms_n = 2;
  static double ms_mu = 1.0, ms_cap = 2.0;
  minsum->add_option("--discipline", ms_disc, "Queue discipline")
      ->required()
      ->check(CLI::IsMember({"fcfs", "lcfs-s", "lcfs-w"}));
  minsum->add_option("--n", ms_n, "Number of sources (default 2)")->check(CLI::PositiveNumber);
  minsum->add_option("--mu", ms_mu, "Service rate (default 1)")->check(CLI::PositiveNumber);
  minsum->add_option("--rho-cap", ms_cap, "Load cap for the LCFS disciplines (default 2)")
      ->check(CLI::PositiveNumber);
  minsum->callback([&] {
    const auto res = aoi::min_sum_age(aoi::parse_discipline(ms_disc), ms_n, ms_mu, ms_cap);
    json cfg{{"discipline", ms_disc}, {"n", ms_n}, {"mu", ms_mu}, {"rho_cap", ms_cap}};
    emit_json(out_path, json{{"command", "region min-sum"},
                             {"rho_star", res.rho_star},
                             {"sum_age", res.sum_age},
                             {"capped", res.capped},
                             {"limit_sum_age", res.limit_sum_age},
                             {"manifest", make_manifest(cfg)}});
  });

  auto* adapt = region->add_subcommand("adapt", "Synchronous rate-adaptation iteration");
  static std::size_t ad_n = 2, ad_iters = 200;
  static double ad_tol = 1e-6;
  static std::string ad_init;
  static bool ad_csv = false;
  adapt->add_option("--n", ad_n, "Number of sources (default 2)")->check(CLI::PositiveNumber);
  adapt->add_option("--init", ad_init, "Initial loads, comma-separated")->required();
  adapt->add_option("--max-iters", ad_iters, "Iteration cap (default 200)")
      ->check(CLI::PositiveNumber);
  adapt->add_option("--tol", ad_tol, "Convergence tolerance (default 1e-6)")
      ->check(CLI::PositiveNumber);
  adapt->add_flag("--csv", ad_csv, "Emit the trajectory as CSV (iter,rho1,...)");
  adapt->callback([&] {
    const auto traj = aoi::rate_adapt(ad_n, parse_csv_doubles(ad_init, "--init"), ad_iters, ad_tol);
    json cfg{{"n", ad_n}, {"init", ad_init}, {"max_iters", ad_iters}, {"tol", ad_tol}};
    const json manifest = make_manifest(cfg);
    if (ad_csv) {
      std::string text = "iter";
      for (std::size_t i = 1; i <= ad_n; ++i) text += ",rho" + std::to_string(i);
      text += "\n";
      for (std::size_t k = 0; k < traj.iterations.size(); ++k) {
        text += std::to_string(k);
        for (const double r : traj.iterations[k]) text += "," + num(r);
        text += "\n";
      }
      emit(out_path, json{{"manifest", manifest}}, text);
      return;
    }
    json payload{{"command", "region adapt"},
                 {"iterations", traj.iterations},
                 {"converged", traj.converged},
                 {"manifest", manifest}};
    payload["fixed_point"] = traj.converged ? json(traj.fixed_point) : json(nullptr);
    emit_json(out_path, payload);
  });

  auto* cross = region->add_subcommand("crossover",
                                       "Does LCFS-W beat LCFS-S in sum age at these loads?");
  static RateFlags cr_rates;
  cr_rates.attach(cross);
  cross->callback([&] {
    const aoi::SourceLoads loads = cr_rates.resolve();
    double sum_s = 0.0, sum_w = 0.0;
    for (std::size_t i = 0; i < loads.size(); ++i) {
      sum_s += aoi::lcfs_s_age(loads, i);
      sum_w += aoi::lcfs_w_age(loads, i);
    }
    json cfg{{"mu", loads.mu}, {"rhos", loads.rhos}};
    emit_json(out_path, json{{"command", "region crossover"},
                             {"crossover", aoi::crossover(loads)},
                             {"sum_age_lcfs_s", sum_s},
                             {"sum_age_lcfs_w", sum_w},
                             {"manifest", make_manifest(cfg)}});
  });

  // ---------------------------------------------------------------- verify
  auto* verify = app.add_subcommand("verify", "Run the cross-validation suite");
  static std::string vf_level = "fast", vf_fault;
  static int vf_threads = 1;
  static std::uint64_t vf_seed = 1;
  verify->add_option("--level", vf_level, "fast: analytic checks; full: adds Monte Carlo closures")
      ->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--threads", vf_threads,
                     "Worker threads for the Monte Carlo checks (capped by AOI_THREADS)");
  verify->add_option("--seed", vf_seed, "Base seed for the Monte Carlo checks (default 1)");
  verify->add_option("--inject-fault", vf_fault,
                     "Testing hook: corrupt the named check (supported: shs-closure)");
  verify->callback([&] {
    aoi::VerifyOptions opts;
    opts.full = vf_level == "full";
    opts.threads = resolve_threads(vf_threads);
    opts.seed = vf_seed;
    opts.inject_fault = vf_fault;
    std::vector<aoi::CheckResult> checks;
    try {
      checks = aoi::run_verification(opts);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    json report = aoi::verification_report(checks, opts);
    json cfg{{"level", vf_level}, {"threads", opts.threads}};
    if (!vf_fault.empty()) cfg["inject_fault"] = vf_fault;
    report["command"] = "verify";
    report["manifest"] = make_manifest(cfg, vf_seed);
    emit_json(out_path, report);
    if (!report["passed"].get<bool>()) throw aoi::AoiError("verification failed");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion")
      return app.exit(e);
    app.exit(e);  // prints the parser message to stderr
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const aoi::AoiError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
