#include <json.hpp>

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run scm_cli(const std::string& args, const std::string& env = "") {
  const auto dir = fs::temp_directory_path();
  const auto out = dir / "scm_cli_stdout.txt", err = dir / "scm_cli_stderr.txt";
  const std::string cmd = env + " " + std::string(SCM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

}  // namespace

TEST_CASE("command line workflow") {
  const auto dir = fs::temp_directory_path() / "scm_cli_flow";
  fs::remove_all(dir);

  auto r = scm_cli("synth --n 300 --exposures 2 --seed 3 --out " + dir.string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "data.csv"));
  CHECK(fs::exists(dir / "truth.csv"));

  // Shrink the search so the test stays quick.
  Json cfg = Json::parse(slurp(dir / "study.json"));
  cfg["selection"]["lambda_grid"] = {{0.1, 0.1}};
  cfg["selection"]["m_values"] = {1, 2};
  cfg["train"]["max_steps"] = 150;
  cfg["output_dir"] = "";
  std::ofstream(dir / "study.json") << cfg.dump(2);
  const std::string common = " --data " + (dir / "data.csv").string() + " --config " + (dir / "study.json").string();

  r = scm_cli("validate" + common);
  CHECK(r.code == 0);
  CHECK(Json::parse(r.out)["valid"] == true);

  r = scm_cli("train" + common + " --factor e1 --cadres 2 --max-steps 100 --lambda-d 0.5 --seed 4");
  REQUIRE(r.code == 0);
  const Json trained = Json::parse(r.out);
  CHECK(trained["params"]["M"] == 2);
  CHECK(trained["config"]["lambda_d"] == 0.5);

  r = scm_cli("select" + common + " --factor e2");
  REQUIRE(r.code == 0);
  CHECK(Json::parse(r.out)["selection"].size() == 2);

  // Output directory falls back to the environment variable.
  const auto run_dir = dir / "run";
  r = scm_cli("ewas" + common, "SCM_OUTPUT_DIR=" + run_dir.string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(run_dir / "association.csv"));
  CHECK(fs::exists(run_dir / "models" / "e1_M2.json"));

  r = scm_cli("glm" + common + " --factor e1 --model " + (run_dir / "models" / "e1_M2.json").string() + " --cadre 2");
  REQUIRE(r.code == 0);
  CHECK(Json::parse(r.out)["fits"].size() == 2);

  r = scm_cli("fdr --tests " + (run_dir / "association.csv").string() + " --alpha 0.05");
  REQUIRE(r.code == 0);
  CHECK(Json::parse(r.out).size() == Json::parse(slurp(run_dir / "association.json")).size());

  r = scm_cli("report --run " + (run_dir / "run.json").string() + " --out " + (dir / "again").string());
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "again" / "association.csv") == slurp(run_dir / "association.csv"));
  fs::remove_all(dir);
}

TEST_CASE("errors are reported as JSON with nonzero exit codes") {
  auto r = scm_cli("ewas --data /nonexistent.csv --config /nonexistent.json");
  CHECK(r.code != 0);
  CHECK(Json::parse(r.err).contains("error"));

  r = scm_cli("frobnicate");
  CHECK(r.code == 2);
  CHECK(Json::parse(r.err)["error"]["type"] == "usage");

  const auto bad = fs::temp_directory_path() / "scm_cli_bad.json";
  std::ofstream(bad) << R"({"alpha": 2.0})";
  r = scm_cli("fdr --tests " + bad.string());
  CHECK(r.code != 0);
  CHECK(Json::parse(r.err).contains("error"));
  fs::remove(bad);
}
