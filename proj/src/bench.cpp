#include "tpspline/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tpspline/estimator.hpp"
#include "tpspline/variance.hpp"

namespace tps::bench {

double mm1_true(double x) {
  if (!(x > 1.0)) throw std::invalid_argument("mm1: service rate must exceed the arrival rate 1");
  return 1.0 / (x * x - x);
}

double mm1_true_deriv2(double x) {
  if (!(x > 1.0)) throw std::invalid_argument("mm1: service rate must exceed the arrival rate 1");
  const double u = x * x - x, du = 2 * x - 1;
  return (2 * du * du - 2 * u) / (u * u * u);
}

namespace {

// E[(S_1 + ... + S_j)^+] where S = Exp(x) - Exp(1). Conditioning on the
// number k of service completions that fall before the j-th arrival gap gives
// a negative-binomial mixture; only k < j leaves a positive remainder, which
// is then Gamma(j - k, x).
double positive_part_mean(int j, double x) {
  const double log_p = std::log(x / (1 + x)), log_q = -std::log1p(x);
  double log_t = j * log_q;  // k = 0: C(j-1, 0) q^j
  double sum = 0;
  for (int k = 0; k < j; ++k) {
    sum += std::exp(log_t) * (j - k) / x;
    log_t += std::log(double(k + j) / double(k + 1)) + log_p;
  }
  return sum;
}

}  // namespace

double mm1_transient_mean(double x, int customers) {
  mm1_true(x);
  if (customers < 1) throw std::invalid_argument("mm1: need at least one customer");
  double wait = 0, total = 0;  // wait = E[W_k]
  for (int k = 1; k < customers; ++k) {
    wait += positive_part_mean(k, x) / k;
    total += wait;
  }
  return total / customers;
}

double simulate_mm1(double x, int customers, RandomStream& rng) {
  mm1_true(x);
  if (customers < 1) throw std::invalid_argument("mm1: need at least one customer");
  double w = 0, total = 0;
  for (int k = 1; k < customers; ++k) {
    const double service = rng.exponential(x);
    const double gap = rng.exponential(1.0);
    w = std::max(0.0, w + service - gap);
    total += w;
  }
  return total / customers;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace {

double d1(double x, const OptionConfig& cfg) {
  const double vt = cfg.volatility * std::sqrt(cfg.maturity);
  return (std::log(x / cfg.strike) + (cfg.rate + 0.5 * cfg.volatility * cfg.volatility) * cfg.maturity) / vt;
}

void check_option(double x, const OptionConfig& cfg) {
  if (!(x >= 0)) throw std::invalid_argument("option: spot must be nonnegative");
  if (!(cfg.volatility > 0 && cfg.maturity > 0 && cfg.strike > 0))
    throw std::invalid_argument("option: need volatility, maturity and strike > 0");
}

}  // namespace

double bs_price(double x, const OptionConfig& cfg) {
  check_option(x, cfg);
  if (x == 0) return 0;
  const double a = d1(x, cfg), b = a - cfg.volatility * std::sqrt(cfg.maturity);
  return x * normal_cdf(a) - cfg.strike * std::exp(-cfg.rate * cfg.maturity) * normal_cdf(b);
}

double bs_gamma(double x, const OptionConfig& cfg) {
  check_option(x, cfg);
  if (x == 0) return 0;
  const double a = d1(x, cfg);
  const double density = std::exp(-0.5 * a * a) / std::sqrt(2 * std::numbers::pi);
  return density / (x * cfg.volatility * std::sqrt(cfg.maturity));
}

double simulate_euro_call(double x, const OptionConfig& cfg, RandomStream& rng) {
  check_option(x, cfg);
  const double z = rng.normal();
  const double st = x * std::exp((cfg.drift - 0.5 * cfg.volatility * cfg.volatility) * cfg.maturity +
                                 cfg.volatility * std::sqrt(cfg.maturity) * z);
  return std::exp(-cfg.rate * cfg.maturity) * std::max(0.0, st - cfg.strike);
}

Experiment parse_experiment(const std::string& name) {
  if (name == "mm1") return Experiment::Mm1;
  if (name == "option") return Experiment::Option;
  if (name == "partition") return Experiment::Partition;
  throw std::invalid_argument("unknown experiment '" + name + "' (expected mm1, option or partition)");
}

const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::Mm1: return "mm1";
    case Experiment::Option: return "option";
    case Experiment::Partition: return "partition";
  }
  return "?";
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  switch (e) {
    case Experiment::Mm1:
      cfg.n = {15, 25, 35};
      cfg.methods = {"a", "b", "cv", "lambda1", "lambda2", "lambda3"};
      cfg.replicates = 100;
      break;
    case Experiment::Option:
      cfg.n = {15, 25, 35};
      cfg.methods = {"a", "b", "cv", "lambda4", "lambda5", "lambda6"};
      cfg.replicates = 5000;
      break;
    case Experiment::Partition:
      cfg.n = {30, 40, 50};
      cfg.methods = {"b"};
      cfg.replicates = 1;
      break;
  }
  return cfg;
}

void use_full_replications(ExperimentConfig& cfg) {
  cfg.reps = cfg.experiment == Experiment::Partition ? 1600 : 400;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad value for '" + key + "': " + text);
  return v;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  const auto exp = kv.find("experiment");
  if (exp == kv.end()) throw std::invalid_argument("config: missing 'experiment'");
  ExperimentConfig cfg = default_config(parse_experiment(exp->second));
  kv.erase(exp);
  if (auto full = kv.find("full"); full != kv.end()) {
    if (full->second == "true") use_full_replications(cfg);
    else if (full->second != "false") throw std::invalid_argument("config: 'full' must be true or false");
    kv.erase(full);
  }
  for (const auto& [key, value] : kv) {
    if (key == "n") {
      cfg.n.clear();
      for (const auto& v : split_list(value)) cfg.n.push_back(parse_number<int>(key, v));
    } else if (key == "methods") {
      cfg.methods = split_list(value);
    } else if (key == "reps") {
      cfg.reps = parse_number<int>(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "replicates") {
      cfg.replicates = parse_number<int>(key, value);
    } else if (key == "customers") {
      cfg.customers = parse_number<int>(key, value);
    } else if (key == "cells") {
      cfg.cells = parse_number<int>(key, value);
    } else if (key == "m") {
      cfg.m = parse_number<int>(key, value);
    } else if (key == "threads") {
      cfg.threads = parse_number<unsigned>(key, value);
    } else if (key == "strike") {
      cfg.option.strike = parse_number<double>(key, value);
    } else if (key == "rate") {
      cfg.option.rate = parse_number<double>(key, value);
    } else if (key == "volatility") {
      cfg.option.volatility = parse_number<double>(key, value);
    } else if (key == "drift") {
      cfg.option.drift = parse_number<double>(key, value);
    } else if (key == "maturity") {
      cfg.option.maturity = parse_number<double>(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

namespace {

std::optional<int> lambda_index(const std::string& method) {
  if (method.size() == 7 && method.rfind("lambda", 0) == 0 && method[6] >= '1' && method[6] <= '6')
    return method[6] - '0';
  return std::nullopt;
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  if (cfg.n.empty()) throw std::invalid_argument("config: empty n list");
  if (cfg.methods.empty()) throw std::invalid_argument("config: empty method list");
  if (cfg.reps < 1) throw std::invalid_argument("config: reps must be >= 1");
  if (cfg.m < 1) throw std::invalid_argument("config: m must be >= 1");
  if (cfg.threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (cfg.customers < 1) throw std::invalid_argument("config: customers must be >= 1");
  if (cfg.cells < 1) throw std::invalid_argument("config: cells must be >= 1");
  const auto big_m = basis_dimension(cfg.m, 1);
  for (int n : cfg.n)
    if (n < big_m + 1) throw std::invalid_argument("config: each n must be at least M + 1 = " + std::to_string(big_m + 1));
  for (const auto& method : cfg.methods)
    if (method != "a" && method != "b" && method != "cv" && !lambda_index(method))
      throw std::invalid_argument("config: unknown method '" + method + "'");
  if (cfg.experiment == Experiment::Partition) {
    if (cfg.replicates != 1) throw std::invalid_argument("config: the partition study uses one observation per point");
  } else if (cfg.replicates < 2) {
    throw std::invalid_argument("config: replicates must be >= 2");
  }
  if (cfg.experiment == Experiment::Option) {
    if (!(cfg.option.volatility > 0 && cfg.option.maturity > 0 && cfg.option.strike > 0))
      throw std::invalid_argument("config: option needs volatility, maturity and strike > 0");
  }
}

double lambda_sequence(int k, int n) {
  if (k < 1 || k > 6) throw std::invalid_argument("lambda_sequence: index must be 1..6");
  const double exponent = k <= 3 ? -(5 + k) : -(k + 1);
  return std::pow(10.0, exponent) / n;
}

Points<double> design(const ExperimentConfig& cfg, int n) {
  Points<double> x(n, 1);
  for (int i = 1; i <= n; ++i) {
    switch (cfg.experiment) {
      case Experiment::Mm1: x(i - 1, 0) = 1.5 + i / (2.0 * n) - 1.0 / (4.0 * n); break;
      case Experiment::Option: x(i - 1, 0) = 2.0 * i / n - 1.0 / n; break;
      case Experiment::Partition: x(i - 1, 0) = double(i) / n - 1.0 / (2.0 * n); break;
    }
  }
  return x;
}

const EimseRow* EimseReport::find(const std::string& method, int n, const std::string& metric) const {
  for (const auto& r : rows)
    if (r.method == method && r.n == n && r.metric == metric) return &r;
  return nullptr;
}

namespace {

struct Metric {
  std::string name;
  double scale;
  Vector<double> truth;  // target at the design points
  bool deriv;
};

Box<double> domain_of(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::Mm1: return {1.5, 2.0};
    case Experiment::Option: return cfg.option.domain;
    case Experiment::Partition: return {0.0, 1.0};
  }
  return {};
}

std::vector<Metric> metrics_for(const ExperimentConfig& cfg, const Points<double>& x) {
  const Eigen::Index n = x.rows();
  auto tabulate = [&](auto f) {
    Vector<double> v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = f(x(i, 0));
    return v;
  };
  switch (cfg.experiment) {
    case Experiment::Mm1: {
      const int c = cfg.customers;
      const double h = 1e-3;
      auto transient = [c](double s) { return mm1_transient_mean(s, c); };
      auto transient_d2 = [&](double s) { return (transient(s + h) - 2 * transient(s) + transient(s - h)) / (h * h); };
      return {{"value", 1e-4, tabulate(mm1_true), false},
              {"deriv2", 1.0, tabulate(mm1_true_deriv2), true},
              {"value_transient", 1e-4, tabulate(transient), false},
              {"deriv2_transient", 1.0, tabulate(transient_d2), true}};
    }
    case Experiment::Option: {
      const OptionConfig o = cfg.option;
      return {{"value", 1e-5, tabulate([&](double s) { return bs_price(s, o); }), false},
              {"deriv2", 1e-1, tabulate([&](double s) { return bs_gamma(s, o); }), true}};
    }
    case Experiment::Partition:
      return {{"value", 1.0, tabulate([](double s) { return (s - 0.25) * (s - 0.25); }), false},
              {"deriv2", 1.0, tabulate([](double) { return 2.0; }), true}};
  }
  return {};
}

struct Sample {
  Dataset<double> data;
  double s_n;
};

Sample simulate(const ExperimentConfig& cfg, const Points<double>& x, RandomStream& rng) {
  const Eigen::Index n = x.rows();
  if (cfg.experiment == Experiment::Partition) {
    Dataset<double> data{x, Vector<double>(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const double f = (x(i, 0) - 0.25) * (x(i, 0) - 0.25);
      data.y(i) = f - 0.25 + 0.5 * rng.uniform();
    }
    const double s_n = partition_s_n(data, cfg.cells, Box<double>{0.0, 1.0}).s_n;
    return {std::move(data), s_n};
  }
  ReplicatedDataset<double> rep{x, Matrix<double>(n, cfg.replicates)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < cfg.replicates; ++j)
      rep.y(i, j) = cfg.experiment == Experiment::Mm1 ? simulate_mm1(x(i, 0), cfg.customers, rng)
                                                      : simulate_euro_call(x(i, 0), cfg.option, rng);
  auto est = replicate_s_n(rep);
  return {std::move(est.collapsed), est.s_n};
}

// Per method: squared-error averages per metric, or the failure message.
struct MethodOutcome {
  std::vector<double> values;
  std::string error;
};

std::vector<MethodOutcome> run_replication(const ExperimentConfig& cfg, const SplineSetup<double>& setup,
                                           const Points<double>& x, const std::vector<Metric>& metrics, int rep) {
  const int n = static_cast<int>(x.rows());
  RandomStream rng = RandomStream::derive(cfg.seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
  std::vector<MethodOutcome> out(cfg.methods.size());
  std::optional<Sample> sample;
  try {
    sample = simulate(cfg, x, rng);
  } catch (const std::exception& e) {
    for (auto& o : out) o.error = std::string("data: ") + e.what();
    return out;
  }

  const MultiIndex second({2});
  std::optional<FitResult<double>> b_fit;
  std::string b_error;
  auto fit_b = [&]() -> const FitResult<double>& {
    if (!b_fit && b_error.empty()) {
      try {
        b_fit = fit_problem_b(sample->data, sample->s_n, setup);
      } catch (const std::exception& e) {
        b_error = e.what();
      }
    }
    if (!b_fit) throw std::runtime_error("problem B: " + b_error);
    return *b_fit;
  };

  for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
    const std::string& method = cfg.methods[k];
    try {
      std::optional<FitResult<double>> fit;
      if (method == "b") {
        fit = fit_b();
      } else if (method == "a") {
        fit = fit_problem_a(sample->data, fit_b().achieved_J, setup);
      } else if (method == "cv") {
        const auto cv = cross_validate(sample->data, default_lambda_grid(), setup);
        fit = fit_problem_c(sample->data, cv.lambda, setup);
      } else {
        fit = fit_problem_c(sample->data, lambda_sequence(*lambda_index(method), n), setup);
      }
      Vector<double> value(n), deriv(n);
      for (int i = 0; i < n; ++i) {
        value(i) = eval(fit->model, x.row(i));
        deriv(i) = eval_deriv(fit->model, x.row(i), second);
      }
      for (const auto& metric : metrics)
        out[k].values.push_back(((metric.deriv ? deriv : value) - metric.truth).squaredNorm() / n);
    } catch (const std::exception& e) {
      out[k].error = e.what();
    }
  }
  return out;
}

}  // namespace

EimseReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  EimseReport report;
  const SplineSetup<double> setup = make_setup(cfg.m, 1, domain_of(cfg));
  for (int n : cfg.n) {
    const Points<double> x = design(cfg, n);
    const std::vector<Metric> metrics = metrics_for(cfg, x);
    std::vector<std::vector<MethodOutcome>> results(cfg.reps);

    std::atomic<int> next{0};
    auto worker = [&] {
      for (int rep = next++; rep < cfg.reps; rep = next++) results[rep] = run_replication(cfg, setup, x, metrics, rep);
    };
    const unsigned workers = std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.reps));
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
      int failures = 0;
      for (int rep = 0; rep < cfg.reps; ++rep) {
        const auto& o = results[rep][k];
        if (!o.error.empty()) {
          ++failures;
          report.failures.push_back("method=" + cfg.methods[k] + " n=" + std::to_string(n) + " rep=" +
                                    std::to_string(rep) + ": " + o.error);
        }
      }
      for (std::size_t q = 0; q < metrics.size(); ++q) {
        std::vector<double> v;
        for (int rep = 0; rep < cfg.reps; ++rep) {
          const auto& o = results[rep][k];
          if (o.error.empty()) v.push_back(o.values[q] / metrics[q].scale);
        }
        const int count = static_cast<int>(v.size());
        double mean = std::nan(""), half = std::nan("");
        if (count > 0) mean = std::accumulate(v.begin(), v.end(), 0.0) / count;
        if (count > 1) {
          double ss = 0;
          for (double e : v) ss += (e - mean) * (e - mean);
          half = 1.96 * std::sqrt(ss / (count - 1) / count);
        }
        report.rows.push_back({cfg.methods[k], n, metrics[q].name, mean, half, metrics[q].scale, count, failures});
      }
    }
  }
  return report;
}

void write_csv(std::ostream& out, const EimseReport& report) {
  out << "method,n,metric,mean,ci_halfwidth,scale,replications\n";
  char buf[64];
  auto num = [&](double v) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    return std::string(buf, ec == std::errc() ? ptr : buf);
  };
  for (const auto& r : report.rows)
    out << r.method << ',' << r.n << ',' << r.metric << ',' << num(r.mean) << ',' << num(r.ci_halfwidth) << ','
        << num(r.scale) << ',' << r.replications << '\n';
}

}  // namespace tps::bench
