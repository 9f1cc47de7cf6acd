#pragma once

// Simulation experiments: M/M/1 mean waiting time against service rate,
// European call price and gamma against spot, and the single-observation
// study with a partition estimate of S_n.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tpspline/model.hpp"
#include "tpspline/random.hpp"

namespace tps::bench {

/// Steady-state mean wait 1/(x(x-1)) at unit arrival rate; throws for x <= 1.
double mm1_true(double x);
double mm1_true_deriv2(double x);
/// Exact mean of (W_1 + ... + W_N)/N for a queue started empty, W_1 = 0.
/// Uses Spitzer's identity E[W_{k+1}] = sum_{j<=k} E[(S_1 + ... + S_j)^+]/j
/// with S_j = service - interarrival.
double mm1_transient_mean(double x, int customers);
/// Lindley recursion W_{k+1} = max(0, W_k + S_k - A_k); returns mean of W_1..W_N.
double simulate_mm1(double x, int customers, RandomStream& rng);

struct OptionConfig {
  double strike = 1.3;
  double rate = 0.03;
  double volatility = 0.3;
  double drift = 0.03;
  double maturity = 1.0;
  Box<double> domain{0.0, 2.0};
};

double normal_cdf(double z);
double bs_price(double x, const OptionConfig& cfg);
double bs_gamma(double x, const OptionConfig& cfg);
/// One discounted payoff from a terminal-price draw.
double simulate_euro_call(double x, const OptionConfig& cfg, RandomStream& rng);

struct EimsePair {
  double value;
  double deriv;
};

/// (1/n) sum (f(X_i) - truth(X_i))^2 and the same for D^alpha f against truth_deriv.
template <typename Truth, typename TruthDeriv>
EimsePair eimse(const SplineModel<double>& model, Truth truth, TruthDeriv truth_deriv, const Points<double>& x,
                const MultiIndex& alpha) {
  double sv = 0, sd = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const RowVector<double> xi = x.row(i);
    const double ev = eval(model, xi) - truth(xi);
    const double ed = eval_deriv(model, xi, alpha) - truth_deriv(xi);
    sv += ev * ev;
    sd += ed * ed;
  }
  const double n = static_cast<double>(x.rows());
  return {sv / n, sd / n};
}

enum class Experiment { Mm1, Option, Partition };

Experiment parse_experiment(const std::string& name);
const char* to_string(Experiment e);

struct ExperimentConfig {
  Experiment experiment = Experiment::Mm1;
  std::vector<int> n;
  std::vector<std::string> methods;  // a, b, cv, lambda1 .. lambda6
  int reps = 50;
  std::uint64_t seed = 1;
  int replicates = 100;   // r per design point; 1 for the partition study
  int customers = 1000;   // M/M/1 horizon
  int cells = 5;          // partition cells per axis
  int m = 4;
  unsigned threads = 1;
  OptionConfig option;
};

/// Defaults for each experiment at desk scale.
ExperimentConfig default_config(Experiment e);
/// Sets reps to the published counts (400, or 1600 for the partition study).
void use_full_replications(ExperimentConfig& cfg);
/// Key = value lines; '#' starts a comment. Lists are comma separated.
ExperimentConfig parse_config(std::istream& in);
void validate(const ExperimentConfig& cfg);

/// lambda(k) for k = 1..6: 1e-6/n, 1e-7/n, 1e-8/n, 1e-5/n, 1e-6/n, 1e-7/n.
double lambda_sequence(int k, int n);
Points<double> design(const ExperimentConfig& cfg, int n);

struct EimseRow {
  std::string method;
  int n;
  std::string metric;
  double mean;          // in units of `scale`
  double ci_halfwidth;  // 1.96 sd / sqrt(replications), same units
  double scale;
  int replications;     // successful replications
  int failures;
};

struct EimseReport {
  std::vector<EimseRow> rows;
  std::vector<std::string> failures;  // one message per failed (method, n, rep)

  const EimseRow* find(const std::string& method, int n, const std::string& metric) const;
};

EimseReport run_experiment(const ExperimentConfig& cfg);
void write_csv(std::ostream& out, const EimseReport& report);

}  // namespace tps::bench
