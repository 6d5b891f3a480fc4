// End-to-end runs of the braesskit binary; the path comes from the
// BRAESSKIT_BIN environment variable set by ctest.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "braess/json_io.hpp"
#include "fixtures.hpp"

using namespace braess;
namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* bin = std::getenv("BRAESSKIT_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "BRAESSKIT_BIN must point at the CLI binary");
  return bin;
}

int run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("braess_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_classic_fixture(const TempDir& tmp) {
  auto d = fixtures::classic_diamond(4000.0);
  save_network(d.net, tmp.file("net.json"));
  save_delay_params(d.delays, tmp.file("delays.json"));
}

void write_physical_fixture(const TempDir& tmp) {
  auto d = fixtures::physical_diamond(1350.0);
  save_network(d.net, tmp.file("net.json"));
  save_delay_params(d.delays, tmp.file("delays.json"));
}

}  // namespace

TEST_CASE("solve command writes an equilibrium") {
  TempDir tmp;
  write_classic_fixture(tmp);
  const int code = run("solve --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --out " + tmp.file("out"));
  CHECK(code == 0);
  auto summary = load_equilibrium_summary(tmp.file("out/equilibrium.json"));
  CHECK(summary.total_delay == doctest::Approx(320000.0).epsilon(1e-3));
}

TEST_CASE("detect command finds the braess route") {
  TempDir tmp;
  write_classic_fixture(tmp);
  const int code = run("detect --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --out " + tmp.file("out"));
  CHECK(code == 0);
  auto report = load_removal_report_summary(tmp.file("out/removal_report.json"));
  CHECK_FALSE(report.paradox_free);
  CHECK(report.improvement == doctest::Approx(0.1875).epsilon(1e-3));
  CHECK(fs::exists(tmp.file("out/equilibrium_before.json")));
  CHECK(fs::exists(tmp.file("out/equilibrium_after.json")));
  CHECK(fs::exists(tmp.file("out/reduced_network.json")));
  Network reduced = load_network(tmp.file("out/reduced_network.json"));
  CHECK_FALSE(reduced.has_route("r_cross"));
}

TEST_CASE("detect reruns are byte-identical") {
  TempDir tmp;
  write_classic_fixture(tmp);
  const std::string base = "detect --network " + tmp.file("net.json") + " --delays " +
                           tmp.file("delays.json") + " --seed 7 --out ";
  REQUIRE(run(base + tmp.file("a")) == 0);
  REQUIRE(run(base + tmp.file("b")) == 0);
  for (const std::string name :
       {"removal_report.json", "equilibrium_before.json", "equilibrium_after.json",
        "reduced_network.json"})
    CHECK(slurp(tmp.file("a/" + name)) == slurp(tmp.file("b/" + name)));
}

TEST_CASE("demand override changes the answer") {
  TempDir tmp;
  write_classic_fixture(tmp);
  std::ofstream(tmp.file("demand.csv"))
      << "od_id,origin,destination,demand_vph\nk1,A,D,2000\n";
  const int code = run("detect --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --demand " + tmp.file("demand.csv") +
                       " --out " + tmp.file("out"));
  CHECK(code == 0);
  auto report = load_removal_report_summary(tmp.file("out/removal_report.json"));
  CHECK(report.paradox_free);  // 2000 vph is below the paradox threshold
}

TEST_CASE("missing inputs exit with the input-error code") {
  TempDir tmp;
  CHECK(run("solve --network " + tmp.file("nope.json") + " --delays x --out " +
            tmp.file("out")) == 2);
  write_classic_fixture(tmp);
  CHECK(run("calibrate --network " + tmp.file("net.json") + " --out " + tmp.file("out")) ==
        2);  // neither --obs-dir nor --synthetic
}

TEST_CASE("tiny budget exits with the budget code") {
  TempDir tmp;
  write_classic_fixture(tmp);
  const int code = run("detect --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --method route-combo --budget 2 --out " +
                       tmp.file("out"));
  CHECK(code == 4);
}

TEST_CASE("calibrate --synthetic then solve and detect on the result") {
  TempDir tmp;
  write_physical_fixture(tmp);
  int code = run("calibrate --network " + tmp.file("net.json") + " --synthetic --out " +
                 tmp.file("cal") + " --windows 14 --seed 3");
  CHECK(code == 0);
  REQUIRE(fs::exists(tmp.file("cal/delays.json")));
  DelayMap delays = load_delay_params(tmp.file("cal/delays.json"));
  CHECK(delays.count("ab") == 1);
  CHECK(delays.count(phantom_link_id("ab", "bd")) == 1);

  code = run("solve --network " + tmp.file("net.json") + " --delays " +
             tmp.file("cal/delays.json") + " --out " + tmp.file("out"));
  CHECK(code == 0);
}

TEST_CASE("calibrate from observation files with a fallback link") {
  TempDir tmp;
  write_physical_fixture(tmp);
  fs::create_directories(tmp.file("obs"));
  // Observations for every physical link except "bd" (which then inherits
  // from its upstream neighbour "ab").
  auto d = fixtures::physical_diamond(1350.0);
  for (const std::string lid : {"ab", "ac", "bc", "cd"}) {
    ObservationSet obs;
    obs.link_id = lid;
    const auto& fn = std::get<BprDelay>(d.delays[lid]);
    for (int i = 0; i < 12; ++i) {
      const double z = 2500.0 * (i + 0.5) / 12.0;
      obs.travel_times.push_back({z, eval(fn, z)});
    }
    save_observations_csv(obs, tmp.file("obs/" + lid + ".csv"));
  }
  const int code = run("calibrate --network " + tmp.file("net.json") + " --obs-dir " +
                       tmp.file("obs") + " --out " + tmp.file("cal"));
  CHECK(code == 0);
  DelayMap delays = load_delay_params(tmp.file("cal/delays.json"));
  const auto& ab = std::get<BprDelay>(delays.at("ab"));
  const auto& bd = std::get<BprDelay>(delays.at("bd"));
  CHECK(ab.a == doctest::Approx(4.0 / 3.0).epsilon(1e-3));
  CHECK(bd.a == doctest::Approx(ab.a));  // inherited
  CHECK(bd.b == doctest::Approx(ab.b));
}

TEST_CASE("validate command produces the summary") {
  TempDir tmp;
  write_physical_fixture(tmp);
  REQUIRE(run("detect --network " + tmp.file("net.json") + " --delays " +
              tmp.file("delays.json") + " --out " + tmp.file("out")) == 0);
  const int code = run("validate --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --detect-dir " + tmp.file("out") +
                       " --out " + tmp.file("val") + " --horizon 1800 --seed 5");
  CHECK(code == 0);
  CHECK(fs::exists(tmp.file("val/validation.json")));

  // report consumes whatever is present.
  CHECK(run("report --out " + tmp.file("out")) == 0);
  CHECK(fs::exists(tmp.file("out/report/steps.csv")));
}

TEST_CASE("validate skips the reduced run on a paradox-free network") {
  TempDir tmp;
  write_physical_fixture(tmp);
  std::ofstream(tmp.file("demand.csv"))
      << "od_id,origin,destination,demand_vph\nk1,A,D,400\n";
  REQUIRE(run("detect --network " + tmp.file("net.json") + " --delays " +
              tmp.file("delays.json") + " --demand " + tmp.file("demand.csv") + " --out " +
              tmp.file("out")) == 0);
  auto report = load_removal_report_summary(tmp.file("out/removal_report.json"));
  REQUIRE(report.paradox_free);
  const int code = run("validate --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --demand " + tmp.file("demand.csv") +
                       " --detect-dir " + tmp.file("out") + " --out " + tmp.file("val") +
                       " --horizon 1800");
  CHECK(code == 0);
  const std::string body = slurp(tmp.file("val/validation.json"));
  CHECK(body.find("\"reduced_run\": false") != std::string::npos);
}

TEST_CASE("validate reports spillback with its exit code") {
  TempDir tmp;
  write_physical_fixture(tmp);
  std::ofstream(tmp.file("demand.csv"))
      << "od_id,origin,destination,demand_vph\nk1,A,D,5200\n";
  REQUIRE(run("detect --network " + tmp.file("net.json") + " --delays " +
              tmp.file("delays.json") + " --demand " + tmp.file("demand.csv") + " --out " +
              tmp.file("out")) == 0);
  const int code = run("validate --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --demand " + tmp.file("demand.csv") +
                       " --detect-dir " + tmp.file("out") + " --out " + tmp.file("val") +
                       " --horizon 3600 --seed 2");
  CHECK(code == 5);
  CHECK(slurp(tmp.file("val/validation.json")).find("\"spillback\": true") !=
        std::string::npos);
}

TEST_CASE("an unconverged solve exits with the non-convergence code") {
  TempDir tmp;
  write_classic_fixture(tmp);
  const int code = run("solve --network " + tmp.file("net.json") + " --delays " +
                       tmp.file("delays.json") + " --max-iters 1 --tol 1e-14 --out " +
                       tmp.file("out"));
  CHECK(code == 3);
}

TEST_CASE("validate reruns are byte-identical") {
  TempDir tmp;
  write_physical_fixture(tmp);
  REQUIRE(run("detect --network " + tmp.file("net.json") + " --delays " +
              tmp.file("delays.json") + " --out " + tmp.file("out")) == 0);
  const std::string base = "validate --network " + tmp.file("net.json") + " --delays " +
                           tmp.file("delays.json") + " --detect-dir " + tmp.file("out") +
                           " --horizon 1800 --seed 9 --out ";
  REQUIRE(run(base + tmp.file("v1")) == 0);
  REQUIRE(run(base + tmp.file("v2")) == 0);
  CHECK(slurp(tmp.file("v1/validation.json")) == slurp(tmp.file("v2/validation.json")));
}
