#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polyest/contrast_synthesis.hpp"
#include "polyest/model.hpp"
#include "polyest/risk_certification.hpp"

namespace polyest {

/* Batch experiment over the sparse-nuisance pipeline: one instance, one
 * synthesis pass for the three contrasts (per-coordinate H with its G block,
 * the identity-channel alternative, and their aggregation), then seeded
 * Monte-Carlo trials comparing the empirical recovery errors against the
 * certified bounds. */
struct ExperimentConfig {
  int m = 64;  // observations
  int n = 64;  // nuisance dimension (identity channel requires n == m)
  int p = 16;  // signal dimension
  int q = 16;  // target dimension (identity B requires q == p)
  double sigma = 0.1;
  double epsilon = 0.05;
  int s = 4;           // nuisance sparsity
  double kappa = 0.25;  // channel-design parameter, in (0, 1/2)
  int trials = 100;
  std::uint64_t seed = 1;
  // Nuisance magnitude; negative means the default 10*sigma.
  double amplitude = -1.0;
  // Which estimators run per trial; synthesis always builds all contrasts so
  // the certified bounds and the shared confidence set are well defined.
  bool run_hg = true;
  bool run_ig = true;
  bool run_hig = true;
  int threads = 0;  // 0: hardware concurrency
  std::string output_dir = ".";
  // When set, used verbatim instead of the smooth-signal recipe.
  std::optional<ProblemInstance> custom_instance;

  double nuisance_amplitude() const { return amplitude < 0.0 ? 10.0 * sigma : amplitude; }
  void validate() const;
};

ExperimentConfig desk_config();
ExperimentConfig paper_config();

/* Key-value config file: one `key = value` per line, '#' comments.  Keys are
 * the field names above (estimators = comma list from {hg, ig, hig}).
 * Unknown keys are rejected. */
ExperimentConfig parse_config_file(const std::string& path);

/* Discretized smooth functions on a uniform grid over [0, 2*pi):
 * |f(0)| <= f0_bound, |f'(0)| <= df0_bound and |f''| <= d2f_bound, with the
 * derivatives read off the grid by finite differences at step h = 2*pi/p.
 * Encoded as one rank-one quadratic form per finite-difference row. */
BasicEllitope build_smoothness_ellitope(int p, double f0_bound = 4.0,
                                        double df0_bound = 1.0,
                                        double d2f_bound = 4.0);

/* Instance recipe: A is Gaussian orthonormalized so A^T A = I_p, N = I_m,
 * B = I_p, X the smooth-signal ellitope, Euclidean error norm, sparse
 * nuisance of sparsity s.  Deterministic in the seed. */
ProblemInstance gen_instance(const ExperimentConfig& cfg, std::uint64_t seed);

/* s-sparse vector with uniformly chosen support and entries of magnitude
 * amplitude*(1 + U[0,1]) with random signs.  Deterministic in the seed. */
Eigen::VectorXd gen_sparse_nuisance(int n, int s, double amplitude,
                                    std::uint64_t seed);

/* Hit-and-run sampler over an ellitope: random directions with a uniform step
 * inside the feasible chord, found by gauge bisection.  Deterministic in the
 * seed; the result always satisfies gauge <= 1. */
Eigen::VectorXd sample_signal(const BasicEllitope& E, std::uint64_t seed,
                              int sweeps = -1);

struct EstimatorOutcome {
  bool ran = false;
  bool solver_ok = true;  // false: the trial solve failed, recorded not fatal
  bool feasible = true;   // sparse program reported provably infeasible
  double x_err = std::numeric_limits<double>::quiet_NaN();
  double nu_err = std::numeric_limits<double>::quiet_NaN();
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  bool in_confidence = false;
  EstimatorOutcome hg, ig, hig;
  double seconds = 0.0;
};

struct ExperimentBounds {
  double kbar = 0.0;   // experiment-wide confidence threshold
  double rho_h = 0.0;  // channel-design sensitivity
  double opt2 = 0.0;   // nuisance-error bounds of the alternative route
  double opt_inf = 0.0;
  double hg = 0.0;   // certified risk of the per-coordinate route
  double ig = 0.0;   // certified risk of the identity-channel route
  double hig = 0.0;  // aggregated bound, min of the two branch values
  double branch_gated = 0.0;
  double branch_alt = 0.0;
};

struct ErrorSummary {
  double median = 0.0;
  double q90 = 0.0;
  double max = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::uint64_t instance_hash = 0;
  ExperimentBounds bounds;
  SynthesisReport gated;
  SynthesisReport alternative;
  ContrastMatrix combined{Eigen::MatrixXd(0, 0)};
  std::vector<TrialRecord> trials;

  // Zero-violation counters over confidence-set trials.
  int domination_violations = 0;  // x-error above the certified bound
  int ql1_violations = 0;         // per-coordinate route nu-error bound
  int side_violations = 0;        // alternative-route nu-error bounds
  int outside_confidence = 0;
  int solver_failures = 0;

  ErrorSummary hg_summary, ig_summary, hig_summary;
  ErrorSummary nu_hg_summary, nu_ig_summary, nu_hig_summary;

  double synth_seconds = 0.0;
  double trial_seconds = 0.0;
  double total_seconds = 0.0;

  // Largest tolerated exclusion frequency: epsilon + 3 binomial sigmas.
  double exclusion_budget() const;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// One CSV row per (trial, estimator) plus a header line.
void write_trials_csv(const ExperimentReport& report, const std::string& path);
// Config echo, bounds, counters, summaries, timings.
void write_summary_json(const ExperimentReport& report, const std::string& path);

// Plain-text contrast round trip (dimensions, role tags, full precision).
void save_contrast(const ContrastMatrix& G, const std::string& path);
ContrastMatrix load_contrast(const std::string& path);

}  // namespace polyest
