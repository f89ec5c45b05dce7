#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "setctl/scenario.hpp"

using namespace setctl::scenario;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("setctl_scenario_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string error_of(const json& cfg) {
  try {
    run(cfg, ".", scratch("err").string());
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("shipped configs match the built-in demos") {
  for (const char* k : {"wrapping-demo", "bracketing", "identify", "smc", "mpc", "battery", "ilo"}) {
    std::ifstream is(fs::path(SETCTL_CONFIG_DIR) / (std::string(k) + ".json"));
    REQUIRE(is.good());
    CHECK(json::parse(is) == demo_config(k));
  }
  CHECK_THROWS_AS(demo_config("nope"), std::invalid_argument);
}

TEST_CASE("wrapping-demo summary") {
  const Outcome o = run(demo_config("wrapping-demo"), ".", scratch("wrap").string());
  CHECK(o.exit_code == 0);
  CHECK(o.summary["naive_width"].get<double>() == doctest::Approx(32).epsilon(1e-9));
  CHECK(o.summary["power_width"].get<double>() == doctest::Approx(2).epsilon(1e-9));
  CHECK(fs::exists(o.output_dir / "summary.json"));
  CHECK(slurp(o.output_dir / "wrapping.csv").rfind("k,naive_lo_1,", 0) == 0);
}

TEST_CASE("identify decay scenario reports counts and coverage") {
  const Outcome o = run(demo_config("identify"), ".", scratch("ident").string());
  CHECK(o.exit_code == 0);
  CHECK(o.summary["p_star_covered"].get<bool>());
  CHECK(o.summary["feasible"].get<int>() > 0);
  CHECK(o.summary["infeasible"].get<int>() > 0);
  CHECK(o.summary.contains("undecided"));
  CHECK(slurp(o.output_dir / "boxes.csv").rfind("status,p1_lo,p1_hi\n", 0) == 0);

  // the same data read back from CSV gives the same partition
  json cfg = demo_config("identify");
  cfg.erase("synthetic");
  cfg["measurements"] = (o.output_dir / "measurements.csv").string();
  const Outcome again = run(cfg, ".", scratch("ident2").string());
  CHECK(slurp(again.output_dir / "boxes.csv") == slurp(o.output_dir / "boxes.csv"));
}

TEST_CASE("identical config and seed give byte-identical CSVs") {
  for (const char* k : {"bracketing", "battery", "ilo", "mpc"}) {
    json cfg = demo_config(k);
    if (std::string(k) == "battery") cfg["observer"]["steps"] = 2000;
    const Outcome a = run(cfg, ".", scratch(std::string(k) + "_a").string());
    const Outcome b = run(cfg, ".", scratch(std::string(k) + "_b").string());
    for (const auto& f : a.summary["files"]) {
      const std::string name = f.get<std::string>();
      CHECK(slurp(a.output_dir / name) == slurp(b.output_dir / name));
    }
  }
  // the seed matters where noise is drawn
  json cfg = demo_config("battery");
  cfg["observer"]["steps"] = 200;
  const Outcome a = run(cfg, ".", scratch("seed_a").string());
  cfg["seed"] = 7;
  const Outcome b = run(cfg, ".", scratch("seed_b").string());
  CHECK(slurp(a.output_dir / "cell.csv") != slurp(b.output_dir / "cell.csv"));
}

TEST_CASE("schema errors name the field") {
  CHECK(error_of(json::object()).rfind("config.kind:", 0) == 0);
  CHECK(error_of({{"kind", "teleport"}}).rfind("config.kind:", 0) == 0);
  json c = demo_config("mpc");
  c["R"] = "heavy";
  CHECK(error_of(c).rfind("config.R:", 0) == 0);
  c = demo_config("mpc");
  c["loop"]["x0"] = {1.0, 2.0};
  CHECK(error_of(c).rfind("config.loop.x0:", 0) == 0);
  c = demo_config("bracketing");
  c["x0"][1] = {1.0, 0.0};
  CHECK(error_of(c).rfind("config.x0[1]:", 0) == 0);
  c = demo_config("smc");
  c["controller"]["gain"] = 3;
  CHECK(error_of(c).rfind("config.controller.gain:", 0) == 0);
  c = demo_config("identify");
  c["model"]["f"] = {"-p*"};
  CHECK(error_of(c).rfind("config.model.f[0]:", 0) == 0);
  c = demo_config("bracketing");
  c["A"][0][1] = {-0.3, 0.1};
  CHECK(error_of(c).rfind("config.A:", 0) == 0);
  c = demo_config("ilo");
  c["Cw"] = {{1e-4}};
  CHECK(error_of(c).rfind("config.Cw:", 0) == 0);
}

TEST_CASE("interval-valued fields accept numbers and pairs") {
  json c = demo_config("bracketing");
  c["t_end"] = 0.5;
  c["u"] = 0.1;
  c["b"] = {{0.5, 0.5}, 0.0};
  CHECK(run(c, ".", scratch("pairs").string()).exit_code == 0);
}

TEST_CASE("guaranteed infeasibility exits with 2") {
  json c = demo_config("mpc");
  c["x_min"] = {{1.9}};
  c["x_max"] = {{2.1}};
  c["x_ref"] = {{1.95, 2.05}};
  c["loop"]["steps"] = 2;
  const Outcome o = run(c, ".", scratch("infeasible").string());
  CHECK(o.exit_code == 2);
  CHECK(o.summary["status"] == "infeasible");
}
