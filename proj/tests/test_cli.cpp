// End-to-end tests that drive the installed `aoi` binary as a subprocess.
//
// The harness locates the executable through the AOI_CLI_PATH environment
// variable (set by CMake when registering this test) and checks the three
// public contracts of the tool: exit codes (0 success, 1 domain error,
// 2 usage error), the JSON/CSV payload schemas, and deterministic output
// for repeated identical invocations.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aoi/closed_form.hpp"
#include "aoi/region.hpp"

using nlohmann::json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout, with stderr merged in unless suppressed
};

const char* cli_path() {
  const char* p = std::getenv("AOI_CLI_PATH");
  REQUIRE(p != nullptr);
  return p;
}

// Runs `aoi <args>` and captures output. stderr is merged into stdout by
// default so error messages are visible to assertions; pass merge=false to
// keep the captured stream limited to stdout (for byte-exact comparisons).
CliResult run_cli(const std::string& args, bool merge_stderr = true) {
  std::string cmd = std::string("\"") + cli_path() + "\" " + args +
                    (merge_stderr ? " 2>&1" : " 2>/dev/null");
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[4096];
  size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  return r;
}

json parse_json(const CliResult& r) {
  INFO(r.output);
  REQUIRE_NOTHROW(json::parse(r.output));
  return json::parse(r.output);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("closed-form subcommand emits exact ages and a manifest") {
  const auto r = run_cli("closed --discipline lcfs-s --mu 1 --rho 0.5,0.5");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);

  REQUIRE(j.at("ages").size() == 2);
  CHECK(j["ages"][0].get<double>() == Catch::Approx(4.0).margin(1e-12));
  CHECK(j["ages"][1].get<double>() == Catch::Approx(4.0).margin(1e-12));
  CHECK(j.at("discipline") == "lcfs-s");

  const json& m = j.at("manifest");
  CHECK(m.at("version") == "1.0.0");
  CHECK(m.at("command").get<std::string>().find("closed") != std::string::npos);
  CHECK(m.at("config").at("mu").get<double>() == 1.0);
}

TEST_CASE("closed-form agrees with the library for every discipline") {
  const aoi::SourceLoads loads(2.0, {0.4, 0.2});
  const struct {
    const char* name;
    aoi::AgeVector want;
  } cases[] = {
      {"fcfs", aoi::closed_ages(loads, aoi::Discipline::Fcfs)},
      {"lcfs-s", aoi::closed_ages(loads, aoi::Discipline::LcfsS)},
      {"lcfs-w", aoi::closed_ages(loads, aoi::Discipline::LcfsW)},
  };
  for (const auto& c : cases) {
    DYNAMIC_SECTION("discipline " << c.name) {
      const auto r = run_cli(std::string("closed --discipline ") + c.name +
                             " --mu 2 --rho 0.4,0.2");
      REQUIRE(r.exit_code == 0);
      const json j = parse_json(r);
      REQUIRE(j.at("ages").size() == 2);
      for (std::size_t i = 0; i < 2; ++i)
        CHECK(j["ages"][i].get<double>() ==
              Catch::Approx(c.want[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("arrival rates are an alternative to loads") {
  // --lambda 0.8,0.4 with --mu 2 must resolve to loads 0.4,0.2.
  const auto r = run_cli("closed --discipline lcfs-w --mu 2 --lambda 0.8,0.4");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  const json& rhos = j.at("manifest").at("config").at("rhos");
  REQUIRE(rhos.size() == 2);
  CHECK(rhos[0].get<double>() == Catch::Approx(0.4).margin(1e-15));
  CHECK(rhos[1].get<double>() == Catch::Approx(0.2).margin(1e-15));

  const auto want = aoi::closed_ages(aoi::SourceLoads(2.0, {0.4, 0.2}),
                                     aoi::Discipline::LcfsW);
  CHECK(j["ages"][0].get<double>() == Catch::Approx(want[0]).epsilon(1e-14));
  CHECK(j["ages"][1].get<double>() == Catch::Approx(want[1]).epsilon(1e-14));
}

TEST_CASE("domain errors exit 1 with a diagnostic") {
  const auto r = run_cli("closed --discipline fcfs --mu 1 --rho 0.6,0.6");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("unstable") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  SECTION("missing required option") {
    const auto r = run_cli("closed --discipline fcfs --rho 0.3,0.3");
    CHECK(r.exit_code == 2);
  }
  SECTION("unknown subcommand") {
    const auto r = run_cli("frobnicate");
    CHECK(r.exit_code == 2);
  }
  SECTION("no subcommand at all") {
    const auto r = run_cli("");
    CHECK(r.exit_code == 2);
  }
  SECTION("malformed rate list") {
    const auto r = run_cli("closed --discipline fcfs --mu 1 --rho 0.3,abc");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("usage error") != std::string::npos);
  }
  SECTION("rho and lambda are mutually exclusive") {
    const auto r =
        run_cli("closed --discipline fcfs --mu 1 --rho 0.3 --lambda 0.3");
    CHECK(r.exit_code == 2);
  }
  SECTION("sim horizon and time are mutually exclusive") {
    const auto r = run_cli(
        "sim --discipline fcfs --mu 1 --rho 0.3 --horizon 100 --time 10");
    CHECK(r.exit_code == 2);
  }
  SECTION("unknown fault-injection point") {
    const auto r = run_cli("verify --inject-fault bogus-name");
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("help and version exit cleanly") {
  const auto help = run_cli("--help");
  CHECK(help.exit_code == 0);
  for (const char* sub : {"closed", "shs", "sim", "region", "verify"})
    CHECK(help.output.find(sub) != std::string::npos);

  const auto version = run_cli("--version");
  CHECK(version.exit_code == 0);
  CHECK(version.output.find("1.0.0") != std::string::npos);
}

TEST_CASE("builtin chain models solve through the generic path") {
  const auto r = run_cli(
      "shs builtin --kind lcfs_s_fake --lambda1 0.5 --lambda2 0.5 --mu 1");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  CHECK(j.at("age").get<double>() == Catch::Approx(4.0).margin(1e-9));
  CHECK(j.at("stable").get<bool>());
  CHECK(j.at("residual").get<double>() < 1e-10);
  CHECK(j.at("spectral_abscissa").get<double>() < 0.0);
}

TEST_CASE("transient integration approaches the stationary age") {
  const auto r = run_cli(
      "shs transient --kind lcfs_s_3state --lambda1 0.5 --lambda2 0.5 "
      "--mu 1 --t-end 200 --dt 0.05 --stride 400");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  const auto& times = j.at("times");
  const auto& age = j.at("age");
  REQUIRE(times.size() == age.size());
  REQUIRE(!times.empty());
  CHECK(times.back().get<double>() == Catch::Approx(200.0).margin(1e-9));
  // Stationary age for this model: (1/mu)(1+rho)/rho_1 = 2/0.5 = 4.
  CHECK(age.back().get<double>() == Catch::Approx(4.0).margin(1e-4));
}

TEST_CASE("identical simulator invocations produce identical bytes") {
  const std::string cmd =
      "sim --discipline lcfs-s --mu 1 --rho 0.5,0.5 --horizon 20000 --seed 7";
  const auto a = run_cli(cmd, /*merge_stderr=*/false);
  const auto b = run_cli(cmd, /*merge_stderr=*/false);
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  CHECK(a.output == b.output);
}

TEST_CASE("simulator payload carries per-source statistics") {
  const auto r = run_cli(
      "sim --discipline lcfs-s --mu 1 --rho 0.5,0.5 --horizon 40000 --seed 3");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  // Deliveries inside the default warm-up window are discarded.
  CHECK(j.at("total_deliveries").get<std::uint64_t>() >= 35000);
  CHECK(j.at("measured_time").get<double>() > 0.0);
  const double busy = j.at("busy_fraction").get<double>();
  CHECK(busy > 0.0);
  CHECK(busy < 1.0);

  const auto& per = j.at("per_source");
  REQUIRE(per.size() == 2);
  for (const auto& s : per) {
    // Loose envelope around the exact age of 4: the run is short.
    CHECK(s.at("age_area").get<double>() == Catch::Approx(4.0).margin(0.5));
    CHECK(s.at("stderr_age").get<double>() > 0.0);
    CHECK(s.at("deliveries").get<std::uint64_t>() > 0);
    CHECK(s.at("mean_y").get<double>() > 0.0);
  }
}

TEST_CASE("simulator record dump is valid CSV") {
  const auto r = run_cli(
      "sim --discipline fcfs --mu 1 --rho 0.3 --horizon 50 --seed 1 --csv",
      /*merge_stderr=*/false);
  REQUIRE(r.exit_code == 0);
  const auto lines = split_lines(r.output);
  REQUIRE(lines.size() >= 2);
  CHECK(lines[0] == "source,gen_time,delivery_time,interarrival,system_time");
  // Every data row: five comma-separated fields, delivery after generation.
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream row(lines[i]);
    std::string field;
    std::vector<double> vals;
    while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
    REQUIRE(vals.size() == 5);
    CHECK(vals[2] > vals[1]);  // delivery_time > gen_time
  }
}

TEST_CASE("region contour CSV has the documented header and grid size") {
  const auto r = run_cli(
      "region contour --total 0.6 --discipline lcfs-w --points 11 --csv",
      /*merge_stderr=*/false);
  REQUIRE(r.exit_code == 0);
  const auto lines = split_lines(r.output);
  REQUIRE(lines.size() == 12);  // header + 11 grid points
  CHECK(lines[0] == "rho1,rho2,age1,age2,discipline");
  CHECK(lines[1].find("lcfs-w") != std::string::npos);
}

TEST_CASE("region min-sum reproduces the two-source optimum") {
  const auto r = run_cli("region min-sum --discipline fcfs --n 2");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  const auto& rho_star = j.at("rho_star");
  REQUIRE(rho_star.size() == 2);
  for (const auto& r1 : rho_star)
    CHECK(r1.get<double>() == Catch::Approx(0.306448980753).margin(1e-6));
  CHECK(j.at("sum_age").get<double>() ==
        Catch::Approx(10.5913184503).margin(1e-6));
  CHECK_FALSE(j.at("capped").get<bool>());
}

TEST_CASE("region adapt converges to the symmetric fixed point") {
  const auto r = run_cli("region adapt --n 2 --init 0.5,0.5");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  REQUIRE(j.at("converged").get<bool>());
  const auto& fp = j.at("fixed_point");
  REQUIRE(fp.size() == 2);
  CHECK(fp[0].get<double>() == Catch::Approx(0.342343988124).margin(1e-3));
  CHECK(fp[1].get<double>() == Catch::Approx(0.342343988124).margin(1e-3));
}

TEST_CASE("region crossover reports the policy comparison") {
  const auto r = run_cli("region crossover --mu 1 --rho 0.2,0.2");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  const double sum_s = j.at("sum_age_lcfs_s").get<double>();
  const double sum_w = j.at("sum_age_lcfs_w").get<double>();
  CHECK(j.at("crossover").get<bool>() == (sum_s > sum_w));
  CHECK(j.at("crossover").get<bool>() ==
        aoi::crossover(aoi::SourceLoads(1.0, {0.2, 0.2})));
}

TEST_CASE("fast verification passes and reports nine checks") {
  const auto r = run_cli("verify --level fast --seed 1");
  REQUIRE(r.exit_code == 0);
  const json j = parse_json(r);
  CHECK(j.at("level") == "fast");
  CHECK(j.at("passed").get<bool>());
  CHECK(j.at("checks").size() == 9);
  CHECK(j.at("failures").empty());
}

TEST_CASE("fault injection makes exactly the targeted check fail") {
  const auto r = run_cli("verify --level fast --inject-fault shs-closure");
  CHECK(r.exit_code == 1);
  // The report is printed before the failure diagnostic on stderr; slice
  // out the JSON object.
  const auto first = r.output.find('{');
  const auto last = r.output.rfind('}');
  REQUIRE(first != std::string::npos);
  REQUIRE(last != std::string::npos);
  const json j = json::parse(r.output.substr(first, last - first + 1));
  REQUIRE(j.at("failures").size() == 1);
  CHECK(j["failures"][0] == "shs-closure");
  CHECK_FALSE(j.at("passed").get<bool>());
}

TEST_CASE("--out writes the payload plus a manifest sidecar") {
  namespace fs = std::filesystem;
  const fs::path out = fs::temp_directory_path() / "aoi_cli_test_out.json";
  const fs::path sidecar = out.string() + ".manifest.json";
  std::error_code ec;
  fs::remove(out, ec);
  fs::remove(sidecar, ec);

  const auto r = run_cli("closed --discipline lcfs-s --mu 1 --rho 0.5,0.5 --out " +
                         out.string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(out));
  REQUIRE(fs::exists(sidecar));

  std::ifstream payload_in(out);
  json payload;
  payload_in >> payload;
  CHECK(payload.at("ages")[0].get<double>() == Catch::Approx(4.0).margin(1e-12));

  std::ifstream side_in(sidecar);
  json side;
  side_in >> side;
  CHECK(side.at("output_file") == out.string());
  CHECK(side.at("written_at_utc").get<std::string>().size() == 20);  // ISO-8601 Z
  CHECK(side.at("version") == "1.0.0");

  fs::remove(out, ec);
  fs::remove(sidecar, ec);
}

TEST_CASE("thread requests are capped by the environment") {
  // AOI_THREADS is inherited through the shell; set it in the command.
  std::string cmd = std::string("AOI_THREADS=2 \"") + cli_path() +
                    "\" sim --discipline lcfs-s --mu 1 --rho 0.5 "
                    "--horizon 5000 --seed 2 --threads 8 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = ::pclose(pipe);
  REQUIRE(WIFEXITED(status));
  REQUIRE(WEXITSTATUS(status) == 0);
  const json j = json::parse(out);
  CHECK(j.at("manifest").at("config").at("threads").get<int>() == 2);
}
