#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "tpspline/variance.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tpspline");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = tps::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path tmp_dir() {
  const char* env = std::getenv("TPS_TEST_TMP");
  fs::path dir = env ? fs::path(env) : fs::temp_directory_path() / "tpspline_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string path(const std::string& name) { return (tmp_dir() / name).string(); }

void write(const std::string& file, const std::string& text) {
  std::ofstream(file) << text;
}

std::string slurp(const std::string& file) {
  std::ifstream in(file);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> diagnostics(const std::string& out) {
  std::map<std::string, std::string> kv;
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::vector<double>> csv_rows(const std::string& text, std::string* header = nullptr) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    for (std::string c; std::getline(cells, c, ',');) row.push_back(std::stod(c));
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// 20 noisy points of sin on [0, 2].
std::string single_csv() {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> noise(0, 0.05);
  std::ostringstream s;
  s.precision(17);
  s << "x1,y\n";
  for (int i = 0; i < 20; ++i) {
    const double x = 0.05 + 0.1 * i;
    s << x << ',' << std::sin(2 * x) + noise(gen) << '\n';
  }
  return s.str();
}

std::string replicated_csv() {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> noise(0, 0.1);
  std::ostringstream s;
  s.precision(17);
  s << "x1,rep,y\n";
  for (int i = 0; i < 12; ++i)
    for (int r = 0; r < 4; ++r) {
      const double x = 0.1 * i;
      s << x << ',' << r << ',' << x * x + noise(gen) << '\n';
    }
  return s.str();
}

}  // namespace

TEST_CASE("fit b with --sn auto uses the replicate estimate") {
  const auto data = path("rep.csv"), model = path("rep.model");
  write(data, replicated_csv());
  const Run r = run({"fit", "-i", data, "-o", model, "--problem", "b", "--sn", "auto", "--m", "2"});
  REQUIRE(r.code == 0);
  auto kv = diagnostics(r.out);
  CHECK(kv["s_n_source"] == "replicates");
  CHECK(kv["n"] == "12");

  // Independent recomputation of (1/(n r)) sum_i S_i from the file.
  std::map<double, std::vector<double>> groups;
  for (const auto& row : csv_rows(replicated_csv())) groups[row[0]].push_back(row[2]);
  double total = 0;
  for (const auto& [x, ys] : groups) {
    double mean = 0;
    for (double y : ys) mean += y / ys.size();
    for (double y : ys) total += (y - mean) * (y - mean) / (ys.size() - 1);
  }
  const double expected = total / (12.0 * 4.0);
  CHECK(std::stod(kv["s_n"]) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(fs::exists(model));
}

TEST_CASE("fit with --sn auto on single observations uses the partition estimate") {
  const auto data = path("single.csv"), model = path("single_b.model");
  write(data, single_csv());
  const Run r = run({"fit", "-i", data, "-o", model, "--problem", "b", "--sn", "auto", "--domain", "0,2"});
  REQUIRE(r.code == 0);
  CHECK(diagnostics(r.out)["s_n_source"].rfind("partition k=5", 0) == 0);

  const Run s = run({"estimate-sn", "-i", data, "--domain", "0,2"});
  REQUIRE(s.code == 0);
  CHECK(diagnostics(s.out)["s_n"] == diagnostics(r.out)["s_n"]);
}

TEST_CASE("duplicate x rejected with exit 2 naming the lines") {
  const auto data = path("dup.csv"), model = path("dup.model");
  write(data, "x1,y\n0.1,1\n0.5,2\n0.9,3\n0.5,4\n");
  fs::remove(model);
  const Run r = run({"fit", "-i", data, "-o", model, "--problem", "c", "--lambda", "0"});
  CHECK(r.code == 2);
  CHECK(r.err.find("lines 3 and 5") != std::string::npos);
  CHECK_FALSE(fs::exists(model));
}

TEST_CASE("fit a with --un 0 returns the polynomial fit") {
  const auto data = path("single.csv"), model = path("poly.model");
  write(data, single_csv());
  const Run r = run({"fit", "-i", data, "-o", model, "--problem", "a", "--un", "0"});
  REQUIRE(r.code == 0);
  auto kv = diagnostics(r.out);
  CHECK(kv["edge_case"] == "polynomial_regime");
  CHECK(std::stod(kv["J"]) == 0.0);
}

TEST_CASE("eval on a grid with a derivative column, and the fit round trip") {
  const auto data = path("single.csv"), model = path("c.model"), grid = path("grid.csv");
  write(data, single_csv());
  const Run f = run({"fit", "-i", data, "-o", model, "--problem", "c", "--lambda", "1e-4", "--domain", "0,2"});
  REQUIRE(f.code == 0);

  const Run e = run({"eval", "--model", model, "--grid", "0,2,101", "--deriv", "2", "-o", grid});
  REQUIRE(e.code == 0);
  std::string header;
  const auto rows = csv_rows(slurp(grid), &header);
  CHECK(header == "x1,f,deriv_2");
  REQUIRE(rows.size() == 101);
  for (const auto& row : rows) CHECK(row.size() == 3);
  CHECK(rows.front()[0] == 0.0);
  CHECK(rows.back()[0] == 2.0);

  // Evaluating at the training points reproduces E_n.
  const Run k = run({"eval", "--model", model, "--points", data});
  REQUIRE(k.code == 0);
  const auto at_knots = csv_rows(k.out);
  const auto training = csv_rows(single_csv());
  REQUIRE(at_knots.size() == training.size());
  double en = 0;
  for (std::size_t i = 0; i < training.size(); ++i) {
    CHECK(at_knots[i][0] == training[i][0]);
    en += (training[i][1] - at_knots[i][1]) * (training[i][1] - at_knots[i][1]) / training.size();
  }
  CHECK(std::abs(en - std::stod(diagnostics(f.out)["E_n"])) <= 1e-10 * std::max(1.0, en));
}

TEST_CASE("eval error codes") {
  const auto data = path("single.csv"), model = path("m2.model"), bad = path("v2.model"), out = path("never.csv");
  write(data, single_csv());
  REQUIRE(run({"fit", "-i", data, "-o", model, "--problem", "c", "--lambda", "1e-3"}).code == 0);

  fs::remove(out);
  const Run d = run({"eval", "--model", model, "--grid", "0,2,5", "--deriv", "3", "-o", out});
  CHECK(d.code == 4);
  CHECK_FALSE(fs::exists(out));

  std::string doc = slurp(model);
  doc.replace(doc.find("version 1"), 9, "version 2");
  write(bad, doc);
  CHECK(run({"eval", "--model", bad, "--grid", "0,2,5"}).code == 5);
  CHECK(run({"eval", "--model", model}).code == 2);                        // no grid or points
  CHECK(run({"eval", "--model", path("missing.model"), "--grid", "0,1,3"}).code == 2);
}

TEST_CASE("input problems exit with code 2 and leave no output") {
  const auto data = path("bad.csv"), model = path("bad.model");
  fs::remove(model);
  write(data, "x1,y\n0.1,1\n0.2,oops\n");
  const Run r = run({"fit", "-i", data, "-o", model, "--lambda", "0.1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3, column 'y'") != std::string::npos);
  CHECK_FALSE(fs::exists(model));

  write(data, "x1,y\n0.1,1\n0.2\n");
  CHECK(run({"fit", "-i", data, "-o", model, "--lambda", "0.1"}).code == 2);
  write(data, "x1,value\n0.1,1\n");
  CHECK(run({"fit", "-i", data, "-o", model, "--lambda", "0.1"}).code == 2);
  write(data, single_csv());
  CHECK(run({"fit", "-i", data, "-o", model, "--problem", "a"}).code == 2);             // no --un
  CHECK(run({"fit", "-i", data, "-o", model, "--problem", "z"}).code == 2);
  CHECK(run({"fit", "-i", data, "-o", model, "--problem", "b", "--sn", "-1"}).code == 2);
  CHECK(run({"fit", "-i", data}).code == 2);                                            // missing --output
  CHECK(run({}).code == 2);
  CHECK_FALSE(fs::exists(model));
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("fit c with a lambda grid selects by cross-validation") {
  const auto data = path("single.csv"), model = path("cv.model");
  write(data, single_csv());
  const Run r = run({"fit", "-i", data, "-o", model, "--lambda-grid", "1e-6,1e-4,1e-2"});
  REQUIRE(r.code == 0);
  const double l = std::stod(diagnostics(r.out)["lambda_cv"]);
  CHECK((l == 1e-6 || l == 1e-4 || l == 1e-2));
}

TEST_CASE("bench output is reproducible under a seed") {
  const auto a = path("bench_a.csv"), b = path("bench_b.csv");
  const std::vector<std::string> args = {"bench", "--experiment", "mm1", "--n", "15", "--methods", "b",
                                         "--reps", "2", "--replicates", "10", "--customers", "100", "--seed", "1"};
  auto with_out = [&](const std::string& o) {
    auto v = args;
    v.insert(v.end(), {"-o", o});
    return v;
  };
  REQUIRE(run(with_out(a)).code == 0);
  REQUIRE(run(with_out(b)).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(lines(slurp(a)).size() == 5);  // value, deriv2 and their transient variants
}

TEST_CASE("bench option with one method prints one row per metric") {
  const Run r = run({"bench", "--experiment", "option", "--n", "15", "--methods", "b", "--reps", "2", "--replicates",
                     "100"});
  REQUIRE(r.code == 0);
  const auto out = lines(r.out);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == "method,n,metric,mean,ci_halfwidth,scale,replications");
  CHECK(out[1].rfind("b,15,value,", 0) == 0);
  CHECK(out[2].rfind("b,15,deriv2,", 0) == 0);
}

TEST_CASE("bench partition runs from a config file") {
  const auto cfg = path("part.cfg");
  write(cfg, "experiment = partition\nreps = 10\nseed = 3\n");
  const Run r = run({"bench", "--config", cfg});
  REQUIRE(r.code == 0);
  CHECK(lines(r.out).size() == 7);
}

TEST_CASE("invalid bench configs exit with code 2") {
  CHECK(run({"bench", "--experiment", "heat"}).code == 2);
  CHECK(run({"bench"}).code == 2);
  CHECK(run({"bench", "--experiment", "mm1", "--methods", "zz"}).code == 2);
  CHECK(run({"bench", "--experiment", "mm1", "--reps", "0"}).code == 2);
  const auto cfg = path("bad.cfg");
  write(cfg, "experiment = mm1\nunknown = 3\n");
  CHECK(run({"bench", "--config", cfg}).code == 2);
  CHECK(run({"bench", "--config", path("nope.cfg")}).code == 2);
}
