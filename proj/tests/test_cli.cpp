#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kPed = PED_BINARY;
const std::string kSmoke = std::string(PED_SOURCE_DIR) + "/configs/smoke.json";

int run(const std::string& args) {
  const std::string cmd = kPed + " " + args + " > cli_last.log 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int line_count(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("smoke search writes every report and reruns byte for byte") {
  const fs::path a = fs::absolute("cli_smoke_a");
  const fs::path b = fs::absolute("cli_smoke_b");
  fs::remove_all(a);
  fs::remove_all(b);

  REQUIRE(run("search --config " + kSmoke + " --out " + a.string()) == 0);
  for (const char* f : {"oc_table.csv", "oc_detail.csv", "stability.csv", "stability_rates.csv",
                        "ranking.json", "oc_vs_w.csv", "eta_trend.csv"})
    CHECK_MESSAGE(fs::exists(a / f), f);
  CHECK(line_count(a / "oc_table.csv") == 9);
  // one row per eta and threshold
  CHECK(line_count(a / "eta_trend.csv") == 1 + 3 * 2);

  // Second run in a fresh directory rebuilds all caches and must agree exactly.
  REQUIRE(run("search --config " + kSmoke + " --out " + b.string()) == 0);
  for (const char* f : {"oc_table.csv", "stability.csv", "ranking.json", "eta_trend.csv"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);

  // Cached rerun in place also agrees.
  const std::string before = slurp(a / "oc_table.csv");
  REQUIRE(run("search --config " + kSmoke + " --out " + a.string()) == 0);
  CHECK(slurp(a / "oc_table.csv") == before);

  // A different seed changes the replicates.
  const fs::path c = fs::absolute("cli_smoke_c");
  fs::remove_all(c);
  REQUIRE(run("search --config " + kSmoke + " --out " + c.string() + " --seed 7") == 0);
  CHECK(slurp(c / "oc_table.csv") != before);
}

TEST_CASE("elicit, family and analyze subcommands") {
  const fs::path d = fs::absolute("cli_cmds");
  fs::remove_all(d);
  REQUIRE(run("elicit --config " + kSmoke + " --out " + d.string()) == 0);
  CHECK(fs::exists(d / "prior_w0.1.json"));
  CHECK(fs::exists(d / "prior_w0.3.json"));
  REQUIRE(run("family --config " + kSmoke + " --out " + d.string()) == 0);
  CHECK(fs::exists(d / "coeff_tables.csv"));
  CHECK(line_count(d / "family_diagnostics.csv") == 11);

  const fs::path data = d / "trial.csv";
  {
    std::ofstream out(data);
    out << "exposure,response\n";
    for (int i = 0; i < 40; ++i) out << 0.125 * i << ',' << (i % 3 == 0 ? 0 : (i > 12)) << '\n';
  }
  REQUIRE(run("analyze --config " + kSmoke + " --out " + d.string() + " --data " +
              data.string() + " --w 0.1 --eps-bayes 0.95") == 0);
  const std::string analysis = slurp(d / "analysis.json");
  CHECK(analysis.find("\"prob_similarity\"") != std::string::npos);
  CHECK(analysis.find("\"decision\"") != std::string::npos);
}

TEST_CASE("invalid input exits with status 1") {
  const fs::path d = fs::absolute("cli_bad");
  fs::remove_all(d);
  fs::create_directories(d);
  {
    std::ofstream out(d / "bad.json");
    out << "{ \"schema_version\": 1, ";
  }
  CHECK(run("search --config " + (d / "bad.json").string()) == 1);
  CHECK(slurp("cli_last.log").find("line") != std::string::npos);
  CHECK(run("search --config " + (d / "missing.json").string()) == 1);
  CHECK(run("search") == 1);
  CHECK(run("frobnicate --config " + kSmoke) == 1);

  {
    std::ofstream out(d / "empty.csv");
    out << "exposure,response\n";
  }
  CHECK(run("analyze --config " + kSmoke + " --out " + d.string() + " --data " +
            (d / "empty.csv").string() + " --w 0.1 --eps-bayes 0.95") == 1);
  CHECK(run("analyze --config " + kSmoke + " --out " + d.string() + " --data " +
            (d / "empty.csv").string() + " --w 1.5 --eps-bayes 0.95") == 1);
}
