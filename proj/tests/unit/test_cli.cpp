#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(KDPE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("kdpe_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("simulate writes the requested rows") {
  const auto dir = scratch("sim");
  REQUIRE(run("simulate --dgp dgp1 --n 10 --seed 7 --out " + dir.string()) == 0);
  const auto file = dir / "dgp1_n10_seed7.csv";
  const std::string first = slurp(file);
  CHECK(std::count(first.begin(), first.end(), '\n') == 11);
  CHECK(first.rfind("x,a,y\n", 0) == 0);
  REQUIRE(run("simulate --dgp dgp1 --n 10 --seed 7 --out " + dir.string()) == 0);
  CHECK(slurp(file) == first);
}

TEST_CASE("simulated longitudinal file has five binary-coded columns") {
  const auto dir = scratch("sim2");
  REQUIRE(run("simulate --dgp dgp2 --n 300 --seed 3 --out " + dir.string()) == 0);
  std::istringstream in(slurp(dir / "dgp2_n300_seed3.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,a0,l1,a1,y");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream cells(line);
    std::string cell;
    int col = 0;
    while (std::getline(cells, cell, ',')) {
      if (col > 0) CHECK((cell == "0" || cell == "1"));
      ++col;
    }
    CHECK(col == 5);
  }
  CHECK(rows == 300);
}

TEST_CASE("exit codes") {
  CHECK(run("simulate --n 10 --out /proc/kdpe_cannot_write") == 2);
  CHECK(run("simulate --n ten") == 2);
  CHECK(run("benchmark --config /nonexistent/kdpe.cfg") == 2);
  CHECK(run("benchmark --dgp dgp2 --methods TMLE") == 2);
  const auto dir = scratch("bench");
  CHECK(run("benchmark --n 60 --sims 3 --jobs 2 --trace --out " + dir.string()) == 0);
  const std::string csv = slurp(dir / "results.csv");
  CHECK(csv.rfind("sim_id,method,target,estimate,true_value,iterations,converged,seconds\n", 0) == 0);
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "histogram.csv"));
  CHECK(fs::exists(dir / "trace.jsonl"));
  // A one-iteration cap with an unreachable tolerance cannot converge.
  CHECK(run("benchmark --n 60 --sims 2 --gamma 1e-15 --set kdpe.max_iterations=1 --methods KDPE --out " +
            dir.string()) == 3);
}

TEST_CASE("config files drive runs") {
  const auto dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "dgp = dgp1\nn = 40\nsims = 2\nmethods = NAIVE\nbootstrap.m = 5\n";
  CHECK(run("bootstrap --config " + (dir / "run.cfg").string() + " --out " + dir.string()) == 0);
  const std::string csv = slurp(dir / "bootstrap.csv");
  CHECK(csv.rfind("sim_id,method,target,estimate,variance,lower,upper,covered\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  CHECK(run("fit --config " + (dir / "run.cfg").string() + " --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "model.json"));
}
