#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "polyest/contrast_synthesis.hpp"
#include "polyest/errors.hpp"
#include "polyest/harness.hpp"
#include "polyest/model.hpp"
#include "polyest/recovery.hpp"
#include "polyest/risk_certification.hpp"
#include "polyest/solve.hpp"

using namespace polyest;

namespace {

struct CommonOptions {
  std::string config_path;
  bool paper_scale = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string output_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("-c,--config", opt.config_path, "key = value config file");
  cmd->add_flag("--paper-scale", opt.paper_scale,
                "use the 256/32/8 preset instead of the desk 64/16/4 one");
  cmd->add_option("--seed", opt.seed, "override the config seed")
      ->each([&](const std::string&) { opt.seed_set = true; });
  cmd->add_option("-o,--output-dir", opt.output_dir, "directory for emitted files");
}

ExperimentConfig make_config(const CommonOptions& opt) {
  ExperimentConfig cfg;
  if (!opt.config_path.empty()) cfg = parse_config_file(opt.config_path);
  else if (opt.paper_scale) cfg = paper_config();
  else cfg = desk_config();
  if (opt.seed_set) cfg.seed = opt.seed;
  if (!opt.output_dir.empty()) cfg.output_dir = opt.output_dir;
  cfg.validate();
  return cfg;
}

std::string joined(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir + "/" + name;
}

Eigen::VectorXd load_vector(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open vector file " + path);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  require(!vals.empty(), "vector file " + path + " is empty");
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<int>(vals.size()));
}

void save_vector(const Eigen::VectorXd& v, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path);
  out.precision(17);
  for (int i = 0; i < v.size(); ++i) out << v[i] << '\n';
  require(out.good(), "write failed for " + path);
}

void save_text(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path);
  out << text;
  require(out.good(), "write failed for " + path);
}

// Splits an aggregated contrast by role tags into the four synthesis blocks.
struct SplitContrast {
  Eigen::MatrixXd h_tilde, g_tilde, h_bar, g_bar;
};

SplitContrast split_by_role(const ContrastMatrix& combined) {
  require(combined.has_roles(),
          "the contrast file must carry role tags (h/g/alt-h/alt-g)");
  const int m = combined.rows();
  auto collect = [&](ColumnRole role) {
    std::vector<int> idx;
    for (int i = 0; i < combined.count(); ++i)
      if (combined.role(i) == role) idx.push_back(i);
    Eigen::MatrixXd M(m, static_cast<int>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) M.col(k) = combined.column(idx[k]);
    return M;
  };
  SplitContrast out;
  out.h_tilde = collect(ColumnRole::HBlock);
  out.g_tilde = collect(ColumnRole::GBlock);
  out.h_bar = collect(ColumnRole::AltHBlock);
  out.g_bar = collect(ColumnRole::AltGBlock);
  return out;
}

int cmd_experiment(const CommonOptions& opt, int trials_override, int threads) {
  ExperimentConfig cfg = make_config(opt);
  if (trials_override > 0) cfg.trials = trials_override;
  if (threads > 0) cfg.threads = threads;
  const ExperimentReport report = run_experiment(cfg);

  const std::string csv = joined(cfg.output_dir, "trials.csv");
  const std::string json = joined(cfg.output_dir, "summary.json");
  write_trials_csv(report, csv);
  write_summary_json(report, json);
  save_contrast(report.combined, joined(cfg.output_dir, "contrast_hig.txt"));
  save_text(certificate_record(report.gated.certificate),
            joined(cfg.output_dir, "certificate_hg.txt"));
  save_text(certificate_record(report.alternative.certificate),
            joined(cfg.output_dir, "certificate_ig.txt"));

  std::printf("instance %dx%d signal %d sparsity %d trials %d\n", cfg.m, cfg.n,
              cfg.p, cfg.s, cfg.trials);
  std::printf("bounds: hg %.6f ig %.6f hig %.6f (opt2 %.6f opt_inf %.6f)\n",
              report.bounds.hg, report.bounds.ig, report.bounds.hig,
              report.bounds.opt2, report.bounds.opt_inf);
  std::printf("x error medians: hg %.6f ig %.6f hig %.6f\n",
              report.hg_summary.median, report.ig_summary.median,
              report.hig_summary.median);
  std::printf(
      "violations: domination %d ql1 %d side %d | outside confidence %d "
      "(budget %.1f) | solver failures %d\n",
      report.domination_violations, report.ql1_violations,
      report.side_violations, report.outside_confidence,
      report.exclusion_budget() * cfg.trials, report.solver_failures);
  std::printf("timings: synthesis %.1fs trials %.1fs total %.1fs\n",
              report.synth_seconds, report.trial_seconds, report.total_seconds);
  std::printf("wrote %s, %s\n", csv.c_str(), json.c_str());

  const bool clean = report.domination_violations == 0 &&
                     report.ql1_violations == 0 && report.side_violations == 0 &&
                     report.outside_confidence <=
                         report.exclusion_budget() * cfg.trials;
  return clean ? 0 : 2;
}

int cmd_synth(const CommonOptions& opt, const std::string& design) {
  ExperimentConfig cfg = make_config(opt);
  const ProblemInstance inst = gen_instance(cfg, cfg.seed);
  const double kbar =
      varkappa(inst.sigma, inst.epsilon, inst.n() + 5 * inst.m());

  auto emit = [&](const SynthesisReport& rep, const std::string& stem) {
    save_contrast(ContrastMatrix::concat(rep.h_block, rep.contrast),
                  joined(cfg.output_dir, stem + "_contrast.txt"));
    save_text(certificate_record(rep.certificate),
              joined(cfg.output_dir, stem + "_certificate.txt"));
    std::printf("%s: %d columns, certified %.9f (opt %.9f)\n", stem.c_str(),
                rep.h_block.count() + rep.contrast.count(),
                rep.certificate.value, rep.opt_value);
  };

  SynthesisOptions opts;
  opts.kbar = kbar;
  opts.seed = cfg.seed;
  if (design == "hg" || design == "hig") {
    const ContrastMatrix h = synth_h_sparse(inst, cfg.kappa, kbar);
    const SynthesisReport gated = synth_g_sparse(inst, h, cfg.kappa, opts);
    emit(gated, "hg");
    if (design == "hig") {
      SynthesisOptions alt_opts = opts;
      alt_opts.force_theta1_zero = true;
      const SynthesisReport alt = synth_alternative(
          inst, ContrastMatrix(Eigen::MatrixXd::Identity(inst.m(), inst.m())),
          alt_opts);
      emit(alt, "ig");
      save_contrast(build_aggregated_contrast(gated, alt),
                    joined(cfg.output_dir, "hig_contrast.txt"));
      std::printf("hig: aggregated contrast written\n");
    }
  } else if (design == "ig") {
    SynthesisOptions alt_opts = opts;
    alt_opts.force_theta1_zero = true;
    const SynthesisReport alt = synth_alternative(
        inst, ContrastMatrix(Eigen::MatrixXd::Identity(inst.m(), inst.m())),
        alt_opts);
    emit(alt, "ig");
  } else {
    std::fprintf(stderr, "unknown design '%s' (expected hg, ig, or hig)\n",
                 design.c_str());
    return 1;
  }
  return 0;
}

int cmd_certify(const CommonOptions& opt, const std::string& contrast_path) {
  ExperimentConfig cfg = make_config(opt);
  const ProblemInstance inst = gen_instance(cfg, cfg.seed);
  const ContrastMatrix combined = load_contrast(contrast_path);
  require(combined.rows() == inst.m(),
          "contrast row count does not match the instance");
  const SplitContrast split = split_by_role(combined);
  const double kbar = varkappa(inst.sigma, inst.epsilon, combined.count());

  require(split.h_tilde.cols() == inst.n() && split.g_tilde.cols() > 0,
          "certify: the file lacks the per-coordinate h/g blocks");
  require(split.h_bar.cols() > 0, "certify: the file lacks the alt-h block");
  Eigen::MatrixXd g_all(inst.m(), split.g_tilde.cols() + split.g_bar.cols());
  g_all.leftCols(split.g_tilde.cols()) = split.g_tilde;
  g_all.rightCols(split.g_bar.cols()) = split.g_bar;

  const RiskCertificate branch_gated =
      certify_sparse(inst, ContrastMatrix(g_all), ContrastMatrix(split.h_tilde),
                     cfg.kappa, kbar);
  const SparseAux aux = opt_programs(inst, ContrastMatrix(split.h_bar), kbar);
  Eigen::MatrixXd d_all(inst.m(), g_all.cols() + split.h_bar.cols());
  d_all.leftCols(g_all.cols()) = g_all;
  d_all.rightCols(split.h_bar.cols()) = split.h_bar;
  const RiskCertificate branch_alt =
      certify_sparse_alt(inst, ContrastMatrix(d_all), aux);
  const RiskCertificate agg = certify_aggregated(branch_gated, branch_alt);

  std::cout << certificate_record(agg);
  std::printf("branch values: gated %.9f alt %.9f\n", branch_gated.value,
              branch_alt.value);
  if (!opt.output_dir.empty())
    save_text(certificate_record(agg),
              joined(cfg.output_dir, "certificate_aggregated.txt"));
  return 0;
}

int cmd_recover(const CommonOptions& opt, const std::string& contrast_path,
                const std::string& omega_path, const std::string& out_path) {
  ExperimentConfig cfg = make_config(opt);
  const ProblemInstance inst = gen_instance(cfg, cfg.seed);
  const ContrastMatrix combined = load_contrast(contrast_path);
  const Eigen::VectorXd omega = load_vector(omega_path);
  require(omega.size() == inst.m(), "omega length does not match the instance");
  const RecoveryOutput out = estimate_aggregated(inst, combined, omega);
  if (!out.feasible)
    std::fprintf(stderr, "warning: fit infeasible, returning the zero fallback\n");
  save_vector(out.x_hat, out_path);
  std::printf("x_hat written to %s (fit objective %.9g, l1 nuisance %.9g)\n",
              out_path.c_str(), out.objective, out.nu_hat.lpNorm<1>());
  return out.feasible ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyhedral estimation toolkit"};
  app.require_subcommand(1);

  CommonOptions exp_opt, synth_opt, cert_opt, rec_opt;
  int trials_override = 0, threads = 0;
  std::string design = "hig";
  std::string contrast_path, omega_path, out_path = "x_hat.txt";

  CLI::App* exp = app.add_subcommand("experiment", "synthesize, certify and run trials");
  add_common(exp, exp_opt);
  exp->add_option("--trials", trials_override, "override the trial count");
  exp->add_option("--threads", threads, "worker threads (0: hardware)");

  CLI::App* synth = app.add_subcommand("synth", "synthesize contrasts for the instance");
  add_common(synth, synth_opt);
  synth->add_option("--design", design, "hg, ig, or hig");

  CLI::App* certify = app.add_subcommand("certify", "re-certify a saved contrast");
  add_common(certify, cert_opt);
  certify->add_option("--contrast", contrast_path, "role-tagged contrast file")
      ->required();

  CLI::App* recover = app.add_subcommand("recover", "run the estimator on an observation");
  add_common(recover, rec_opt);
  recover->add_option("--contrast", contrast_path, "contrast file")->required();
  recover->add_option("--omega", omega_path, "observation vector file")->required();
  recover->add_option("--out", out_path, "output path for x_hat");

  CLI11_PARSE(app, argc, argv);

  try {
    if (exp->parsed()) return cmd_experiment(exp_opt, trials_override, threads);
    if (synth->parsed()) return cmd_synth(synth_opt, design);
    if (certify->parsed()) return cmd_certify(cert_opt, contrast_path);
    if (recover->parsed()) return cmd_recover(rec_opt, contrast_path, omega_path, out_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
