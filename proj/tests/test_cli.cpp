#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "critflow/export.hpp"

namespace fs = std::filesystem;
using critflow::Json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "critflow_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(CRITFLOW_CLI) + " --quiet " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

std::map<std::string, std::string> json_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    Json j = read_json(e.path());
    if (e.path().filename() == "manifest.json") j.erase("timestamp");
    out[fs::relative(e.path(), dir).string()] = j.dump();
  }
  return out;
}

fs::path config(const fs::path& dir, const std::string& body, const std::string& name = "run.toml") {
  const auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("flow on the bowl") {
  const auto dir = scratch("flow");
  const auto cfg = config(dir, R"(
scenario = "flow"
[model]
name = "quadratic_bowl"
[flow]
epsilon = 0.1
step = 1e-3
u0 = [1.0]
)");
  REQUIRE(cli("--config " + cfg.string() + " --output " + (dir / "out").string()) == 0);
  std::ifstream csv(dir / "out" / "trajectory.csv");
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 1001);
  CHECK(fs::exists(dir / "out" / "plot.svg"));
  const Json m = read_json(dir / "out" / "manifest.json");
  CHECK(m["status"] == "ok");
  CHECK(m["scenario"] == "flow");
  CHECK(m["timestamp"].contains("wall_seconds"));
  CHECK(m["versions"].contains("eigen"));
  CHECK(m["config"]["flow"]["epsilon"] == 0.1);
}

TEST_CASE("no plots flag") {
  const auto dir = scratch("noplots");
  const auto cfg = config(dir, "scenario = \"flow\"\n[model]\nname = \"quadratic_bowl\"\n[flow]\nu0 = [1.0]\n");
  REQUIRE(cli("--no-plots --config " + cfg.string() + " --output " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "trajectory.csv"));
  CHECK_FALSE(fs::exists(dir / "out" / "plot.svg"));
}

TEST_CASE("atlas of the tilted double well") {
  const auto dir = scratch("atlas");
  const auto cfg = config(dir, "scenario = \"atlas\"\n[model]\nname = \"tilted_double_well\"\n[atlas]\nrho = 10\n");
  REQUIRE(cli("--config " + cfg.string() + " --output " + (dir / "out").string()) == 0);
  const Json a = read_json(dir / "out" / "atlas.json");
  REQUIRE(a["branches"].size() == 1);
  int folds = 0;
  for (const auto& s : a["branches"][0]["samples"]) folds += s["fold"].get<bool>();
  CHECK(folds == 2);
  CHECK(a["fold_points"].size() == 2);
  CHECK(fs::exists(dir / "out" / "atlas.svg"));
}

TEST_CASE("jumps scenario and replay determinism") {
  const auto dir = scratch("jumps");
  const auto cfg = config(dir, R"(
scenario = "jumps"
seed = 3
[model]
name = "tilted_double_well"
[sweep]
epsilons = [0.1, 0.03, 0.01, 0.003]
u0 = [-1.0]
)");
  const std::string args = "--config " + cfg.string() + " --output " + (dir / "out").string();
  REQUIRE(cli(args) == 0);
  const Json j = read_json(dir / "out" / "jumps.json");
  int interior = 0;
  for (const auto& r : j["jumps"]) interior += r["initial"].get<bool>() ? 0 : 1;
  CHECK(interior == 1);
  CHECK(fs::exists(dir / "out" / "limit.csv"));
  CHECK(fs::exists(dir / "out" / "mu_masses.csv"));
  CHECK(fs::exists(dir / "out" / "energy.svg"));
  const auto first = json_outputs(dir / "out");
  REQUIRE(cli(args) == 0);
  const auto second = json_outputs(dir / "out");
  CHECK(first == second);
}

TEST_CASE("cost scenario writes witnesses") {
  const auto dir = scratch("cost");
  const auto cfg = config(dir, "scenario = \"cost\"\n[model]\nname = \"mexican_hat\"\n[cost]\nt = 0.0\n");
  REQUIRE(cli("--no-plots --config " + cfg.string() + " --output " + (dir / "out").string()) == 0);
  const Json c = read_json(dir / "out" / "cost_matrix.json");
  REQUIRE(c["pairs"].size() == 1);
  CHECK(std::abs(c["pairs"][0]["value"].get<double>() - 0.25) <= 1e-3);
  CHECK(fs::exists(dir / "out" / c["pairs"][0]["witness_file"].get<std::string>()));
}

TEST_CASE("seed override reaches the manifest") {
  const auto dir = scratch("seed");
  const auto cfg = config(dir, "scenario = \"generic\"\n[model]\nname = \"tilted_double_well\"\n[generic]\ncount = 4\n",
                          "run.json.toml");
  REQUIRE(cli("--seed 99 --config " + cfg.string() + " --output " + (dir / "out").string()) == 0);
  CHECK(read_json(dir / "out" / "manifest.json")["config"]["seed"] == 99);
  CHECK(read_json(dir / "out" / "generic.json")["seed"] == 99);
}

TEST_CASE("config errors exit with 2") {
  const auto dir = scratch("errors");
  CHECK(cli("--config " + config(dir, "scenario = \"warp\"\n[model]\nname = \"mexican_hat\"\n").string()) == 2);
  CHECK(cli("--config " + config(dir, "scenario = \"atlas\"\n[model]\nname = \"pyramid\"\n").string()) == 2);
  CHECK(cli("--config " + config(dir, "scenario = \"flow\"\n[model]\nname = \"mexican_hat\"\n[flow]\nu0 = [1.0]\n").string()) == 2);
  CHECK(cli("--output " + dir.string()) == 2);
  CHECK(cli("--config " + (dir / "missing.toml").string()) == 2);
}

TEST_CASE("numerical failure exits with 3 and leaves a report") {
  const auto dir = scratch("numerical");
  const auto cfg = config(dir, R"(
scenario = "jumps"
[model]
name = "quadratic_bowl"
[sweep]
epsilons = [0.1, 0.03]
u0 = [1e200]
)");
  CHECK(cli("--config " + cfg.string() + " --output " + (dir / "out").string()) == 3);
  CHECK(fs::exists(dir / "out" / "failure.json"));
  CHECK(read_json(dir / "out" / "manifest.json")["status"] == "failed");
}

}
