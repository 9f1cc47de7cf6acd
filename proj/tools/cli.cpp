#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tpspline/bench.hpp"
#include "tpspline/errors.hpp"
#include "tpspline/estimator.hpp"
#include "tpspline/model_io.hpp"
#include "tpspline/variance.hpp"

namespace tps::cli {

namespace {

// Input or argument problem; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double to_real(const std::string& text, const std::string& where) {
  double v = 0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw UsageError(where + ": not a number: '" + text + "'");
  return v;
}

/// Header row plus numeric rows; `line_of[k]` is the file line of row k.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> line_of;
};

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  Table t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      throw UsageError(path + " line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " columns, found " + std::to_string(cells.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c)
      row.push_back(to_real(cells[c], path + " line " + std::to_string(lineno) + ", column '" + t.header[c] + "'"));
    t.rows.push_back(std::move(row));
    t.line_of.push_back(lineno);
  }
  if (t.header.empty()) throw UsageError(path + ": missing header row");
  if (t.rows.empty()) throw UsageError(path + ": no data rows");
  return t;
}

/// Data file: x1..xd,y or x1..xd,rep,y. Replicates are grouped by identical x.
struct Input {
  Dataset<double> data;                       // collapsed means when replicated
  std::optional<ReplicatedDataset<double>> replicated;
  std::vector<int> line_of;                   // file line of each design point
};

Input read_data(const std::string& path) {
  Table t = read_csv(path);
  if (t.header.back() != "y") throw UsageError(path + ": last column must be 'y'");
  const bool has_rep = t.header.size() >= 3 && t.header[t.header.size() - 2] == "rep";
  const std::size_t d = t.header.size() - (has_rep ? 2 : 1);
  if (d < 1) throw UsageError(path + ": need at least one x column before 'y'");

  Input in;
  if (!has_rep) {
    in.data.x.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
    in.data.y.resize(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) in.data.x(i, j) = t.rows[i][j];
      in.data.y(i) = t.rows[i][d];
    }
    in.line_of = t.line_of;
    return in;
  }

  std::map<std::vector<double>, std::size_t> group_of;
  std::vector<std::vector<double>> points;
  std::vector<std::vector<double>> values;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::vector<double> x(t.rows[i].begin(), t.rows[i].begin() + static_cast<long>(d));
    auto [it, fresh] = group_of.emplace(x, points.size());
    if (fresh) {
      points.push_back(x);
      values.emplace_back();
      in.line_of.push_back(t.line_of[i]);
    }
    values[it->second].push_back(t.rows[i][d + 1]);
  }
  const std::size_t r = values.front().size();
  for (std::size_t g = 0; g < values.size(); ++g)
    if (values[g].size() != r)
      throw UsageError(path + ": design point first seen on line " + std::to_string(in.line_of[g]) + " has " +
                       std::to_string(values[g].size()) + " replicates, expected " + std::to_string(r));
  ReplicatedDataset<double> rep{Points<double>(points.size(), d), Matrix<double>(points.size(), r)};
  for (std::size_t g = 0; g < points.size(); ++g) {
    for (std::size_t j = 0; j < d; ++j) rep.x(g, j) = points[g][j];
    for (std::size_t k = 0; k < r; ++k) rep.y(g, k) = values[g][k];
  }
  in.data = Dataset<double>{rep.x, rep.y.rowwise().mean()};
  in.replicated = std::move(rep);
  return in;
}

/// Writes next to `path` and renames, so a failed command leaves no partial file.
void write_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot open '" + tmp + "' for writing");
    out << text;
    out.flush();
    if (!out) throw UsageError("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

Box<double> parse_domain(const std::string& text, const Points<double>& x) {
  if (text.empty()) {
    if (x.size() == 0) throw UsageError("--domain is required without data");
    return {x.minCoeff(), x.maxCoeff()};
  }
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw UsageError("--domain: expected lo,hi");
  const Box<double> box{to_real(parts[0], "--domain"), to_real(parts[1], "--domain")};
  if (!(box.lo < box.hi)) throw UsageError("--domain: need lo < hi");
  return box;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(to_real(p, flag));
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

struct SnEstimate {
  double value;
  std::string source;
};

SnEstimate estimate_sn(const Input& in, int cells, const Box<double>& box) {
  if (in.replicated) return {replicate_s_n(*in.replicated).s_n, "replicates"};
  const auto est = partition_s_n(in.data, cells, box);
  std::string src = "partition k=" + std::to_string(cells) + " used_cells=" + std::to_string(est.used_cells.size()) +
                    " excluded_cells=" + std::to_string(est.excluded_cells.size());
  return {est.s_n, src};
}

// Rewords duplicate-point errors with file line numbers.
[[noreturn]] void rethrow_duplicate(const DuplicatePointsError& e, const Input& in) {
  throw UsageError("duplicate design points on lines " + std::to_string(in.line_of.at(e.first())) + " and " +
                   std::to_string(in.line_of.at(e.second())));
}

struct FitArgs {
  std::string input, output, problem = "c", sn, lambda_grid, domain;
  std::optional<double> un, lambda;
  int m = 2;
  int cells = 5;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const Input in = read_data(a.input);
  const Box<double> box = parse_domain(a.domain, in.data.x);
  const SplineSetup<double> setup = make_setup(a.m, in.data.dim(), box);

  out << "n=" << in.data.size() << "\nd=" << in.data.dim() << "\nm=" << a.m << "\n";
  std::optional<FitResult<double>> fit;
  try {
    if (a.problem == "a") {
      if (!a.un) throw UsageError("--problem a needs --un");
      if (*a.un < 0) throw UsageError("--un must be nonnegative");
      out << "u_n=" << fmt(*a.un) << "\n";
      fit = fit_problem_a(in.data, *a.un, setup);
    } else if (a.problem == "b") {
      if (a.sn.empty()) throw UsageError("--problem b needs --sn (a value or 'auto')");
      double s = 0;
      if (a.sn == "auto") {
        const auto est = estimate_sn(in, a.cells, box);
        s = est.value;
        out << "s_n=" << fmt(s) << "\ns_n_source=" << est.source << "\n";
      } else {
        s = to_real(a.sn, "--sn");
        if (s < 0) throw UsageError("--sn must be nonnegative");
        out << "s_n=" << fmt(s) << "\n";
      }
      fit = fit_problem_b(in.data, s, setup);
    } else if (a.problem == "c") {
      if (a.lambda) {
        if (*a.lambda < 0) throw UsageError("--lambda must be nonnegative");
        fit = fit_problem_c(in.data, *a.lambda, setup);
      } else if (!a.lambda_grid.empty()) {
        const auto grid =
            a.lambda_grid == "default" ? default_lambda_grid() : parse_list(a.lambda_grid, "--lambda-grid");
        const auto cv = cross_validate(in.data, grid, setup);
        out << "lambda_cv=" << fmt(cv.lambda) << "\n";
        fit = fit_problem_c(in.data, cv.lambda, setup);
      } else {
        throw UsageError("--problem c needs --lambda or --lambda-grid");
      }
    } else if (a.problem == "interp") {
      fit = interpolant(in.data, setup);
    } else if (a.problem == "poly") {
      fit = poly_least_squares(in.data, setup);
    } else {
      throw UsageError("--problem must be one of a, b, c, interp, poly");
    }
  } catch (const DuplicatePointsError& e) {
    rethrow_duplicate(e, in);
  }

  save_model(fit->model, a.output);
  out << "lambda_star=" << fmt(fit->lambda_star) << "\nJ=" << fmt(fit->achieved_J) << "\nE_n=" << fmt(fit->achieved_En)
      << "\niterations=" << fit->iterations << "\nedge_case=" << (fit->edge_case ? to_string(*fit->edge_case) : "none")
      << "\nridge_fallback=" << (fit->ridge_fallback ? "true" : "false") << "\nmodel=" << a.output << "\n";
  return kOk;
}

struct EvalArgs {
  std::string model, grid, points, output;
  std::vector<std::string> derivs;
};

MultiIndex parse_alpha(const std::string& text, int d) {
  std::vector<int> e;
  for (const auto& p : split(text, ',')) {
    const double v = to_real(p, "--deriv");
    if (v < 0 || v != std::floor(v)) throw UsageError("--deriv: orders must be nonnegative integers");
    e.push_back(static_cast<int>(v));
  }
  if (d > 1 && e.size() == 1) throw UsageError("--deriv: give one order per axis, e.g. 2,0");
  if (static_cast<int>(e.size()) != d) throw UsageError("--deriv: expected " + std::to_string(d) + " orders");
  return MultiIndex(e);
}

Points<double> grid_points(const std::string& text, int d) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw UsageError("--grid: expected lo,hi,count");
  const double lo = to_real(parts[0], "--grid"), hi = to_real(parts[1], "--grid");
  const double count = to_real(parts[2], "--grid");
  if (count < 1 || count != std::floor(count)) throw UsageError("--grid: count must be a positive integer");
  const auto k = static_cast<Eigen::Index>(count);
  Eigen::Index total = 1;
  for (int j = 0; j < d; ++j) total *= k;
  Points<double> p(total, d);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rest = row;
    for (int j = 0; j < d; ++j) {
      const Eigen::Index idx = rest % k;
      rest /= k;
      p(row, j) = k == 1 ? lo : lo + (hi - lo) * double(idx) / double(k - 1);
    }
  }
  return p;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const SplineModel<double> model = load_model(a.model);
  const int d = model.setup().d();
  if (a.grid.empty() == a.points.empty()) throw UsageError("eval needs exactly one of --grid or --points");
  Points<double> x;
  if (!a.grid.empty()) {
    x = grid_points(a.grid, d);
  } else {
    const Table t = read_csv(a.points);
    if (static_cast<int>(t.header.size()) < d) throw UsageError(a.points + ": need " + std::to_string(d) + " coordinate columns");
    x.resize(static_cast<Eigen::Index>(t.rows.size()), d);
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      for (int j = 0; j < d; ++j) x(i, j) = t.rows[i][j];
  }
  std::vector<MultiIndex> alphas;
  for (const auto& s : a.derivs) alphas.push_back(parse_alpha(s, d));

  std::ostringstream csv;
  for (int j = 0; j < d; ++j) csv << 'x' << j + 1 << ',';
  csv << 'f';
  for (const auto& alpha : alphas) {
    csv << ",deriv";
    for (int e : alpha.exponents()) csv << '_' << e;
  }
  csv << '\n';
  int outside = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const RowVector<double> xi = x.row(i);
    if (!in_domain(model, xi)) ++outside;
    for (int j = 0; j < d; ++j) csv << fmt(xi(j)) << ',';
    csv << fmt(eval(model, xi));
    for (const auto& alpha : alphas) csv << ',' << fmt(eval_deriv(model, xi, alpha));
    csv << '\n';
  }
  if (outside > 0) err << "warning: " << outside << " evaluation points lie outside the model domain\n";
  if (a.output.empty()) out << csv.str();
  else write_file(a.output, csv.str());
  return kOk;
}

struct SnArgs {
  std::string input, domain;
  int cells = 5;
};

int cmd_estimate_sn(const SnArgs& a, std::ostream& out) {
  const Input in = read_data(a.input);
  const Box<double> box = parse_domain(a.domain, in.data.x);
  const auto est = estimate_sn(in, a.cells, box);
  out << "s_n=" << fmt(est.value) << "\nsource=" << est.source << "\n";
  return kOk;
}

struct BenchArgs {
  std::string experiment, config, n, methods, output;
  std::optional<int> reps, replicates, customers;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool full = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  bench::ExperimentConfig cfg;
  try {
    if (!a.config.empty()) {
      std::ifstream in(a.config);
      if (!in) throw UsageError("cannot open config '" + a.config + "'");
      cfg = bench::parse_config(in);
      if (!a.experiment.empty() && bench::parse_experiment(a.experiment) != cfg.experiment)
        throw UsageError("--experiment disagrees with the config file");
    } else {
      if (a.experiment.empty()) throw UsageError("bench needs --experiment or --config");
      cfg = bench::default_config(bench::parse_experiment(a.experiment));
    }
    if (a.full) bench::use_full_replications(cfg);
    if (!a.n.empty()) {
      cfg.n.clear();
      for (double v : parse_list(a.n, "--n")) {
        if (v != std::floor(v)) throw UsageError("--n: sizes must be integers");
        cfg.n.push_back(static_cast<int>(v));
      }
    }
    if (!a.methods.empty()) {
      cfg.methods.clear();
      for (const auto& m : split(a.methods, ','))
        if (!m.empty()) cfg.methods.push_back(m);
    }
    if (a.reps) cfg.reps = *a.reps;
    if (a.replicates) cfg.replicates = *a.replicates;
    if (a.customers) cfg.customers = *a.customers;
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    bench::validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto report = bench::run_experiment(cfg);
  for (const auto& f : report.failures) err << "replication failed: " << f << "\n";
  std::ostringstream csv;
  bench::write_csv(csv, report);
  if (a.output.empty()) out << csv.str();
  else write_file(a.output, csv.str());
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smoothing-spline fits of functions and derivatives from noisy data"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a model from CSV data and write the model document");
  fit->add_option("--input,-i", fa.input, "CSV with x1..xd,y or x1..xd,rep,y")->required();
  fit->add_option("--output,-o", fa.output, "Model document path")->required();
  fit->add_option("--problem", fa.problem, "a, b, c, interp or poly")->capture_default_str();
  fit->add_option("--un", fa.un, "Roughness budget U_n for problem a");
  fit->add_option("--sn", fa.sn, "Residual budget S_n for problem b, or 'auto'");
  fit->add_option("--lambda", fa.lambda, "Smoothing parameter for problem c");
  fit->add_option("--lambda-grid", fa.lambda_grid, "Comma list or 'default'; problem c picks lambda by leave-one-out CV");
  fit->add_option("--m", fa.m, "Smoothness order")->capture_default_str();
  fit->add_option("--domain", fa.domain, "lo,hi (default: data range)");
  fit->add_option("--cells", fa.cells, "Partition cells per axis for --sn auto without replicates")->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a model and its derivatives");
  ev->add_option("--model", ea.model, "Model document")->required();
  ev->add_option("--grid", ea.grid, "lo,hi,count per axis");
  ev->add_option("--points", ea.points, "CSV whose first d columns are coordinates");
  ev->add_option("--deriv", ea.derivs, "Derivative order (d = 1) or per-axis orders such as 2,0; repeatable");
  ev->add_option("--output,-o", ea.output, "Output CSV (default: standard output)");

  SnArgs sa;
  auto* sn = app.add_subcommand("estimate-sn", "Estimate S_n from replicates or a partition of the domain");
  sn->add_option("--input,-i", sa.input, "CSV data")->required();
  sn->add_option("--cells", sa.cells, "Partition cells per axis")->capture_default_str();
  sn->add_option("--domain", sa.domain, "lo,hi (default: data range)");

  BenchArgs ba;
  auto* bn = app.add_subcommand("bench", "Run a simulation experiment and write the EIMSE report");
  bn->add_option("--experiment", ba.experiment, "mm1, option or partition");
  bn->add_option("--config", ba.config, "key = value experiment file");
  bn->add_option("--n", ba.n, "Comma list of design sizes");
  bn->add_option("--methods", ba.methods, "Comma list from a, b, cv, lambda1..lambda6");
  bn->add_option("--reps", ba.reps, "Replications per n");
  bn->add_option("--replicates", ba.replicates, "Simulation replicates per design point");
  bn->add_option("--customers", ba.customers, "M/M/1 customers per run");
  bn->add_option("--seed", ba.seed, "Master seed");
  bn->add_option("--threads", ba.threads, "Worker threads");
  bn->add_flag("--full", ba.full, "Use the published replication counts");
  bn->add_option("--output,-o", ba.output, "Report CSV (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*fit) return cmd_fit(fa, out);
    if (*ev) return cmd_eval(ea, out, err);
    if (*sn) return cmd_estimate_sn(sa, out);
    return cmd_bench(ba, out, err);
  } catch (const VersionError& e) {
    err << "error: " << e.what() << "\n";
    return kVersion;
  } catch (const UnsupportedDerivativeError& e) {
    err << "error: " << e.what() << "\n";
    return kDerivative;
  } catch (const SingularSystemError& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const RootFindingError& e) {
    err << "error: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace tps::cli
