#include "polyest/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "json.hpp"
#include "polyest/ellitope.hpp"
#include "polyest/errors.hpp"
#include "polyest/recovery.hpp"
#include "polyest/rng.hpp"
#include "polyest/solve.hpp"
#include "polyest/sparse_l1.hpp"

namespace polyest {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  // splitmix64 step over the trial index, decoupled from the base stream.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ErrorSummary summarize(std::vector<double> values) {
  ErrorSummary s;
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto at = [&](double frac) {
    const int idx = std::min<int>(static_cast<int>(values.size()) - 1,
                                  static_cast<int>(frac * values.size()));
    return values[idx];
  };
  s.median = at(0.5);
  s.q90 = at(0.9);
  s.max = values.back();
  return s;
}

const char* role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::HBlock: return "h";
    case ColumnRole::GBlock: return "g";
    case ColumnRole::AltHBlock: return "alt-h";
    case ColumnRole::AltGBlock: return "alt-g";
  }
  return "?";
}

ColumnRole role_from_name(const std::string& name) {
  if (name == "h") return ColumnRole::HBlock;
  if (name == "g") return ColumnRole::GBlock;
  if (name == "alt-h") return ColumnRole::AltHBlock;
  if (name == "alt-g") return ColumnRole::AltGBlock;
  throw InvalidArgument("load_contrast: unknown column role '" + name + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  require(m > 0 && n > 0 && p > 0 && q > 0, "config: dimensions must be positive");
  require(epsilon > 0.0 && epsilon < 1.0, "config: epsilon must lie in (0,1)");
  require(sigma >= 0.0, "config: sigma must be nonnegative");
  require(s >= 0 && s <= n, "config: sparsity must satisfy 0 <= s <= n");
  require(kappa > 0.0 && kappa < 0.5, "config: kappa must lie in (0, 1/2)");
  require(trials >= 1, "config: at least one trial");
  if (!custom_instance) {
    require(n == m, "config: the identity-channel recipe requires n == m");
    require(q == p, "config: the identity-target recipe requires q == p");
    require(p >= 3, "config: the smooth-signal set needs p >= 3");
  }
}

ExperimentConfig desk_config() { return ExperimentConfig{}; }

ExperimentConfig paper_config() {
  ExperimentConfig cfg;
  cfg.m = cfg.n = 256;
  cfg.p = cfg.q = 32;
  cfg.s = 8;
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string key, eq, value;
    std::istringstream ls(line);
    if (!(ls >> key)) continue;
    if (!(ls >> eq >> value) || eq != "=")
      throw InvalidArgument("config: expected 'key = value' at " + path + ":" +
                            std::to_string(lineno));
    auto as_int = [&] { return std::stoi(value); };
    auto as_real = [&] { return std::stod(value); };
    if (key == "m") cfg.m = as_int();
    else if (key == "n") cfg.n = as_int();
    else if (key == "p") cfg.p = as_int();
    else if (key == "q") cfg.q = as_int();
    else if (key == "sigma") cfg.sigma = as_real();
    else if (key == "epsilon") cfg.epsilon = as_real();
    else if (key == "s") cfg.s = as_int();
    else if (key == "kappa") cfg.kappa = as_real();
    else if (key == "trials") cfg.trials = as_int();
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "amplitude") cfg.amplitude = as_real();
    else if (key == "threads") cfg.threads = as_int();
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "estimators") {
      cfg.run_hg = cfg.run_ig = cfg.run_hig = false;
      std::istringstream es(value);
      std::string tok;
      while (std::getline(es, tok, ',')) {
        if (tok == "hg") cfg.run_hg = true;
        else if (tok == "ig") cfg.run_ig = true;
        else if (tok == "hig") cfg.run_hig = true;
        else throw InvalidArgument("config: unknown estimator '" + tok + "'");
      }
    } else {
      throw InvalidArgument("config: unknown key '" + key + "' at " + path + ":" +
                            std::to_string(lineno));
    }
  }
  cfg.validate();
  return cfg;
}

BasicEllitope build_smoothness_ellitope(int p, double f0_bound, double df0_bound,
                                        double d2f_bound) {
  require(p >= 3, "smoothness ellitope: grid size must be at least 3");
  require(f0_bound > 0.0 && df0_bound > 0.0 && d2f_bound > 0.0,
          "smoothness ellitope: bounds must be positive");
  const double h = 2.0 * M_PI / p;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd bound(p);
  P(0, 0) = 1.0;
  bound[0] = f0_bound;
  P(1, 0) = -1.0 / h;
  P(1, 1) = 1.0 / h;
  bound[1] = df0_bound;
  for (int i = 2; i < p; ++i) {
    P(i, i - 2) = 1.0 / (h * h);
    P(i, i - 1) = -2.0 / (h * h);
    P(i, i) = 1.0 / (h * h);
    bound[i] = d2f_bound;
  }
  std::vector<Eigen::MatrixXd> forms;
  forms.reserve(p);
  for (int k = 0; k < p; ++k) {
    const Eigen::VectorXd row = P.row(k) / bound[k];
    forms.push_back(row * row.transpose());
  }
  return BasicEllitope(p, forms, TSet::box(Eigen::VectorXd::Ones(p)));
}

ProblemInstance gen_instance(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.custom_instance) {
    ProblemInstance inst = *cfg.custom_instance;
    inst.validate();
    return inst;
  }
  Rng rng(seed);
  Eigen::MatrixXd raw(cfg.m, cfg.p);
  for (int i = 0; i < cfg.m; ++i)
    for (int j = 0; j < cfg.p; ++j) raw(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd A =
      qr.householderQ() * Eigen::MatrixXd::Identity(cfg.m, cfg.p);
  ProblemInstance inst{A,
                       Eigen::MatrixXd::Identity(cfg.p, cfg.p),
                       Eigen::MatrixXd::Identity(cfg.m, cfg.m),
                       build_smoothness_ellitope(cfg.p),
                       euclidean_ball_ellitope(cfg.p, 1.0),
                       NuisanceSpec::sparse(cfg.s),
                       cfg.sigma,
                       cfg.epsilon};
  inst.validate();
  return inst;
}

Eigen::VectorXd gen_sparse_nuisance(int n, int s, double amplitude,
                                    std::uint64_t seed) {
  require(n >= 1 && s >= 0 && s <= n, "sparse nuisance: need 0 <= s <= n");
  Rng rng(seed);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = 0; i < s; ++i) {
    const int j = rng.uniform_int(i, n - 1);
    std::swap(order[i], order[j]);
  }
  for (int i = 0; i < s; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    nu[order[i]] = sign * amplitude * (1.0 + rng.uniform());
  }
  return nu;
}

Eigen::VectorXd sample_signal(const BasicEllitope& E, std::uint64_t seed,
                              int sweeps) {
  const int dim = E.ambient();
  if (sweeps < 0) sweeps = 8 * dim;
  Rng rng(seed);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);

  // Largest step c with gauge(x + c*d) <= 1; the gauge is convex along the
  // line and equals gauge(x) <= 1 at c = 0.
  auto chord_end = [&](const Eigen::VectorXd& d) {
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 60 && gauge(E, x + hi * d) <= 1.0; ++k) {
      lo = hi;
      hi *= 2.0;
    }
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      (gauge(E, x + mid * d) <= 1.0 ? lo : hi) = mid;
    }
    return lo;
  };

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Eigen::VectorXd d = rng.gaussian_vector(dim);
    const double norm = d.norm();
    if (norm <= 1e-14) continue;
    d /= norm;
    const double fwd = chord_end(d);
    const double bwd = chord_end(-d);
    x += rng.uniform(-bwd, fwd) * d;
  }
  const double g = gauge(E, x);
  if (g > 1.0) x /= g * (1.0 + 1e-12);
  return x;
}

double ExperimentReport::exclusion_budget() const {
  const double eps = config.epsilon;
  const double n_S = static_cast<double>(config.trials);
  return eps + 3.0 * std::sqrt(eps * (1.0 - eps) / n_S);
}

namespace {

struct TrialContext {
  const ExperimentConfig* cfg = nullptr;
  const ProblemInstance* inst = nullptr;
  const ContrastMatrix* g_tilde = nullptr;
  const ContrastMatrix* h_tilde = nullptr;
  const ContrastMatrix* g_bar = nullptr;
  const ContrastMatrix* h_bar = nullptr;
  const ContrastMatrix* combined = nullptr;
  double kbar = 0.0;
};

struct TrialExtras {
  Eigen::VectorXd nu_star;
  Eigen::VectorXd nu_hat_hg;
  Eigen::VectorXd nu_hat_ig;
};

TrialRecord run_trial(const TrialContext& ctx, int trial, TrialExtras& extras) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig& cfg = *ctx.cfg;
  const ProblemInstance& inst = *ctx.inst;
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = trial_seed(cfg.seed, trial);

  const Eigen::VectorXd x_star = sample_signal(inst.X, rec.seed);
  const Eigen::VectorXd nu_star = gen_sparse_nuisance(
      inst.n(), cfg.s, cfg.nuisance_amplitude(), rec.seed ^ 0x5bf0315ULL);
  const Eigen::VectorXd omega =
      sample_observation(inst, x_star, nu_star, rec.seed ^ 0xace4cULL);
  const Eigen::VectorXd xi = omega - inst.A * x_star - inst.N * nu_star;
  rec.in_confidence = in_confidence_set(*ctx.combined, xi, ctx.kbar);
  extras.nu_star = nu_star;

  auto run_one = [&](EstimatorOutcome& out, auto&& solve_fn) {
    out.ran = true;
    try {
      const RecoveryOutput sol = solve_fn();
      out.feasible = sol.feasible;
      out.x_err = (sol.x_hat - x_star).norm();
      out.nu_err = (sol.nu_hat - nu_star).norm();
      return sol;
    } catch (const conic::SolveError&) {
      out.solver_ok = false;
      return RecoveryOutput{};
    }
  };

  if (cfg.run_hg) {
    const RecoveryOutput sol = run_one(rec.hg, [&] {
      return estimate_sparse(inst, *ctx.g_tilde, *ctx.h_tilde, omega, ctx.kbar);
    });
    if (rec.hg.solver_ok) extras.nu_hat_hg = sol.nu_hat;
  }
  if (cfg.run_ig) {
    const RecoveryOutput sol = run_one(rec.ig, [&] {
      return estimate_alternative(inst, *ctx.g_bar, *ctx.h_bar, omega, ctx.kbar);
    });
    if (rec.ig.solver_ok) extras.nu_hat_ig = sol.nu_hat;
  }
  if (cfg.run_hig) {
    run_one(rec.hig, [&] {
      return estimate_aggregated(inst, *ctx.combined, omega, ctx.kbar);
    });
  }
  rec.seconds = seconds_since(t0);
  return rec;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t_total = std::chrono::steady_clock::now();

  ExperimentReport report;
  report.config = cfg;
  const ProblemInstance inst = gen_instance(cfg, cfg.seed);
  report.instance_hash = instance_hash(inst);

  const int m = inst.m(), n = inst.n();
  // One confidence threshold for the whole experiment, budgeted for the full
  // aggregated stack (n channel columns, m identity columns, 4m G columns);
  // every per-route certificate stays valid under the shared event.
  const double kbar = varkappa(inst.sigma, inst.epsilon, n + m + 4 * m);
  report.bounds.kbar = kbar;

  const auto t_synth = std::chrono::steady_clock::now();
  const ContrastMatrix h_tilde = synth_h_sparse(inst, cfg.kappa, kbar);

  SynthesisOptions gated_opts;
  gated_opts.kbar = kbar;
  gated_opts.seed = cfg.seed;
  report.gated = synth_g_sparse(inst, h_tilde, cfg.kappa, gated_opts);

  SynthesisOptions alt_opts;
  alt_opts.kbar = kbar;
  alt_opts.seed = cfg.seed;
  alt_opts.force_theta1_zero = true;
  report.alternative = synth_alternative(
      inst, ContrastMatrix(Eigen::MatrixXd::Identity(m, m)), alt_opts);

  report.combined = build_aggregated_contrast(report.gated, report.alternative);

  const ContrastMatrix g_all =
      ContrastMatrix::concat(report.gated.contrast, report.alternative.contrast);
  const RiskCertificate branch_gated =
      certify_sparse(inst, g_all, h_tilde, cfg.kappa, kbar);
  const SparseAux aux = opt_programs(inst, report.alternative.h_block, kbar);
  const RiskCertificate branch_alt = certify_sparse_alt(
      inst, ContrastMatrix::concat(g_all, report.alternative.h_block), aux);
  const RiskCertificate aggregated = certify_aggregated(branch_gated, branch_alt);

  report.bounds.rho_h = rho_h(inst, h_tilde, cfg.kappa, kbar);
  report.bounds.opt2 = aux.opt2;
  report.bounds.opt_inf = aux.opt_inf;
  report.bounds.hg = report.gated.certificate.value;
  report.bounds.ig = report.alternative.certificate.value;
  report.bounds.hig = aggregated.value;
  report.bounds.branch_gated = branch_gated.value;
  report.bounds.branch_alt = branch_alt.value;
  report.synth_seconds = seconds_since(t_synth);

  TrialContext ctx;
  ctx.cfg = &cfg;
  ctx.inst = &inst;
  ctx.g_tilde = &report.gated.contrast;
  ctx.h_tilde = &h_tilde;
  ctx.g_bar = &report.alternative.contrast;
  ctx.h_bar = &report.alternative.h_block;
  ctx.combined = &report.combined;
  ctx.kbar = kbar;

  const auto t_trials = std::chrono::steady_clock::now();
  report.trials.resize(cfg.trials);
  std::vector<TrialExtras> extras(cfg.trials);
  int nthreads = cfg.threads > 0
                     ? cfg.threads
                     : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min(nthreads, cfg.trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= cfg.trials) break;
      report.trials[t] = run_trial(ctx, t, extras[t]);
    }
  };
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  report.trial_seconds = seconds_since(t_trials);

  // Single-threaded merge: violation counters and summaries.
  std::vector<double> hg_e, ig_e, hig_e, hg_n, ig_n, hig_n;
  const double slack = 1e-7;
  for (int t = 0; t < cfg.trials; ++t) {
    const TrialRecord& rec = report.trials[t];
    if (!rec.in_confidence) ++report.outside_confidence;
    for (const EstimatorOutcome* out : {&rec.hg, &rec.ig, &rec.hig})
      if (out->ran && !out->solver_ok) ++report.solver_failures;

    if (rec.hg.ran) { hg_e.push_back(rec.hg.x_err); hg_n.push_back(rec.hg.nu_err); }
    if (rec.ig.ran) { ig_e.push_back(rec.ig.x_err); ig_n.push_back(rec.ig.nu_err); }
    if (rec.hig.ran) { hig_e.push_back(rec.hig.x_err); hig_n.push_back(rec.hig.nu_err); }

    if (!rec.in_confidence) continue;
    auto dominated = [&](const EstimatorOutcome& out, double bound) {
      if (!out.ran || !out.solver_ok) return;
      // A provably infeasible fit under the confidence event is itself a
      // soundness violation: the truth is feasible there.
      if (!out.feasible || !(out.x_err <= bound + slack))
        ++report.domination_violations;
    };
    dominated(rec.hg, report.bounds.hg);
    dominated(rec.ig, report.bounds.ig);
    dominated(rec.hig, report.bounds.hig);

    if (rec.hg.ran && rec.hg.solver_ok && rec.hg.feasible) {
      if (!l1_bound_holds(h_tilde, inst.N, extras[t].nu_star, extras[t].nu_hat_hg,
                          cfg.s, cfg.kappa))
        ++report.ql1_violations;
    }
    if (rec.ig.ran && rec.ig.solver_ok && rec.ig.feasible) {
      const Eigen::VectorXd z = extras[t].nu_hat_ig - extras[t].nu_star;
      if (!(z.lpNorm<Eigen::Infinity>() <= aux.opt_inf + slack) ||
          !(z.norm() <= aux.opt2 + slack) ||
          !(z.lpNorm<1>() <= 2.0 * cfg.s * aux.opt_inf + slack))
        ++report.side_violations;
    }
  }
  report.hg_summary = summarize(hg_e);
  report.ig_summary = summarize(ig_e);
  report.hig_summary = summarize(hig_e);
  report.nu_hg_summary = summarize(hg_n);
  report.nu_ig_summary = summarize(ig_n);
  report.nu_hig_summary = summarize(hig_n);
  report.total_seconds = seconds_since(t_total);
  return report;
}

void write_trials_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "csv: cannot open " + path);
  out.precision(17);
  out << "trial,seed,estimator,in_confidence,solver_ok,feasible,x_err,nu_err,bound\n";
  auto row = [&](const TrialRecord& rec, const char* name,
                 const EstimatorOutcome& e, double bound) {
    if (!e.ran) return;
    out << rec.trial << ',' << rec.seed << ',' << name << ','
        << (rec.in_confidence ? 1 : 0) << ',' << (e.solver_ok ? 1 : 0) << ','
        << (e.feasible ? 1 : 0) << ',' << e.x_err << ',' << e.nu_err << ','
        << bound << '\n';
  };
  for (const TrialRecord& rec : report.trials) {
    row(rec, "hg", rec.hg, report.bounds.hg);
    row(rec, "ig", rec.ig, report.bounds.ig);
    row(rec, "hig", rec.hig, report.bounds.hig);
  }
  require(out.good(), "csv: write failed for " + path);
}

void write_summary_json(const ExperimentReport& report, const std::string& path) {
  nlohmann::json j;
  const ExperimentConfig& cfg = report.config;
  j["config"] = {{"m", cfg.m},       {"n", cfg.n},
                 {"p", cfg.p},       {"q", cfg.q},
                 {"sigma", cfg.sigma}, {"epsilon", cfg.epsilon},
                 {"s", cfg.s},       {"kappa", cfg.kappa},
                 {"trials", cfg.trials}, {"seed", cfg.seed},
                 {"amplitude", cfg.nuisance_amplitude()}};
  {
    std::ostringstream hex;
    hex << std::hex << report.instance_hash;
    j["instance_hash"] = hex.str();
  }
  j["bounds"] = {{"kbar", report.bounds.kbar},
                 {"rho_h", report.bounds.rho_h},
                 {"opt2", report.bounds.opt2},
                 {"opt_inf", report.bounds.opt_inf},
                 {"hg", report.bounds.hg},
                 {"ig", report.bounds.ig},
                 {"hig", report.bounds.hig},
                 {"branch_gated", report.bounds.branch_gated},
                 {"branch_alt", report.bounds.branch_alt}};
  j["counters"] = {{"domination_violations", report.domination_violations},
                   {"ql1_violations", report.ql1_violations},
                   {"side_violations", report.side_violations},
                   {"outside_confidence", report.outside_confidence},
                   {"exclusion_budget_trials",
                    report.exclusion_budget() * cfg.trials},
                   {"solver_failures", report.solver_failures}};
  auto summary = [](const ErrorSummary& s) {
    return nlohmann::json{{"median", s.median}, {"q90", s.q90}, {"max", s.max}};
  };
  j["x_error"] = {{"hg", summary(report.hg_summary)},
                  {"ig", summary(report.ig_summary)},
                  {"hig", summary(report.hig_summary)}};
  j["nu_error"] = {{"hg", summary(report.nu_hg_summary)},
                   {"ig", summary(report.nu_ig_summary)},
                   {"hig", summary(report.nu_hig_summary)}};
  j["timings"] = {{"synthesis_seconds", report.synth_seconds},
                  {"trial_seconds", report.trial_seconds},
                  {"total_seconds", report.total_seconds}};
  std::ofstream out(path);
  require(out.good(), "json: cannot open " + path);
  out << j.dump(2) << '\n';
  require(out.good(), "json: write failed for " + path);
}

void save_contrast(const ContrastMatrix& G, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "contrast: cannot open " + path);
  out.precision(17);
  out << "contrast " << G.rows() << ' ' << G.count() << ' '
      << (G.has_roles() ? 1 : 0) << '\n';
  if (G.has_roles()) {
    for (int i = 0; i < G.count(); ++i)
      out << role_name(G.role(i)) << (i + 1 < G.count() ? ' ' : '\n');
  }
  for (int r = 0; r < G.rows(); ++r) {
    for (int c = 0; c < G.count(); ++c)
      out << G.matrix()(r, c) << (c + 1 < G.count() ? ' ' : '\n');
  }
  require(out.good(), "contrast: write failed for " + path);
}

ContrastMatrix load_contrast(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "contrast: cannot open " + path);
  std::string magic;
  int rows = 0, cols = 0, has_roles = 0;
  in >> magic >> rows >> cols >> has_roles;
  require(in.good() && magic == "contrast" && rows >= 1 && cols >= 0,
          "contrast: malformed header in " + path);
  std::vector<ColumnRole> roles;
  if (has_roles) {
    roles.reserve(cols);
    for (int i = 0; i < cols; ++i) {
      std::string name;
      in >> name;
      roles.push_back(role_from_name(name));
    }
  }
  Eigen::MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) in >> M(r, c);
  require(!in.fail(), "contrast: truncated data in " + path);
  return has_roles ? ContrastMatrix(std::move(M), std::move(roles))
                   : ContrastMatrix(std::move(M));
}

}  // namespace polyest
