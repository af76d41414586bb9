#include "ebmvae/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ebmvae/checkpoint.hpp"
#include "ebmvae/conditional.hpp"
#include "ebmvae/config.hpp"
#include "ebmvae/datasets.hpp"
#include "ebmvae/diagnostics.hpp"
#include "ebmvae/errors.hpp"
#include "ebmvae/experiment.hpp"
#include "ebmvae/figures.hpp"
#include "ebmvae/metrics.hpp"
#include "ebmvae/net.hpp"
#include "ebmvae/rng.hpp"
#include "ebmvae/sampling.hpp"
#include "ebmvae/training.hpp"

namespace ebmvae {

namespace {

namespace fs = std::filesystem;

// One --section.key flag per config key; values apply on top of --config.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void register_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("-c,--config", flags.config_path, "config file (key = value sections)");
  for (const ConfigKeyInfo& k : config_keys()) {
    const std::string dotted = std::string(k.section) + "." + k.key;
    flags.options[dotted] =
        cmd->add_option("--" + dotted, flags.values[dotted], k.doc);
  }
}

RunConfig assemble_config(const ConfigFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_config(flags.config_path);
  for (const auto& [dotted, opt] : flags.options)
    if (opt->count() > 0) apply_override(cfg, dotted, flags.values.at(dotted));
  validate_config(cfg);
  return cfg;
}

void print_report(const LossReport& r) {
  std::printf("energy_data %.6g  energy_initial %.6g  energy_revised %.6g  gap %.6g\n",
              r.energy_data, r.energy_initial, r.energy_revised, r.energy_gap);
  std::printf("recon %.6g  kl_prior %.6g  vae_loss %.6g\n", r.recon, r.kl_prior,
              r.vae_loss);
}

Tensor parse_y_values(const std::string& inline_y, const std::string& y_file,
                      std::size_t y_dim) {
  if (!inline_y.empty()) {
    std::vector<double> vals;
    std::stringstream ss(inline_y);
    std::string part;
    while (std::getline(ss, part, ','))
      vals.push_back(std::stod(part));
    if (vals.empty() || vals.size() % y_dim != 0)
      throw ContractError("--y needs a multiple of y_dim comma-separated numbers");
    Tensor ys = Tensor::matrix(vals.size() / y_dim, y_dim);
    for (std::size_t i = 0; i < vals.size(); ++i) ys[i] = vals[i];
    return ys;
  }
  if (y_file.empty()) throw ContractError("pass --y or --y-file");
  Tensor ys = read_points_csv(y_file);
  if (ys.cols() != y_dim)
    throw ContractError("--y-file column count does not match cond.y_dim");
  return ys;
}

// ----- check: fast in-process self-tests ------------------------------------

bool check_line(const char* name, bool ok, const std::string& detail = "") {
  if (ok)
    std::printf("ok:   %s\n", name);
  else
    std::printf("FAIL: %s%s\n", name, detail.empty() ? "" : ("  (" + detail + ")").c_str());
  return ok;
}

bool check_gradients() {
  bool all = true;
  Rng rng(12345);
  for (int trial = 0; trial < 3; ++trial) {
    MlpSpec spec;
    spec.in_dim = 3;
    spec.hidden = {8, 8};
    spec.out_dim = 2;
    spec.hidden_act = trial == 1 ? Act::tanh : Act::relu;
    spec.out_act = trial == 2 ? Act::tanh : Act::linear;
    MlpNet net(spec, 1000 + static_cast<std::uint64_t>(trial));
    Tensor x = Tensor::matrix(4, 3);
    rng.fill_normal(x.data(), x.numel());
    const FdReport rep = finite_diff_check(net, x, 1e-5, 1e-4);
    all = all && rep.pass;
  }
  return check_line("net gradients vs central finite differences", all);
}

bool check_partition() {
  QuadraticEnergy q(0.0, 1.0);  // U = x^2/2
  GridSpec grid;
  grid.dims = 1;
  grid.lo = {-8.0, 0.0};
  grid.hi = {8.0, 1.0};
  grid.res = {2000, 16};
  const double got = grid_log_partition(q, grid);
  const double want = 0.5 * std::log(2.0 * 3.14159265358979323846);
  return check_line("1-D partition quadrature vs analytic Gaussian",
                    std::abs(got - want) < 1e-4);
}

bool check_kernel() {
  QuadraticEnergy q(1.0, 2.0);
  const int steps = 5;
  const double delta = 0.2;
  const std::size_t n = 4000;
  SamplerConfig cfg;
  cfg.steps = steps;
  cfg.step_size = delta;
  cfg.seed = 99;
  Tensor x0 = Tensor::matrix(n, 1);
  Rng rng(7);
  for (std::size_t i = 0; i < n; ++i) x0.at(i, 0) = rng.normal();
  const ChainRecord rec = langevin_chain(q, x0, cfg);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += rec.final_x.at(i, 0);
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rec.final_x.at(i, 0) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  const Gaussian1D want = langevin_compose({0.0, 1.0}, 1.0, 2.0, delta, steps, true);
  const double se_mean = std::sqrt(want.var / static_cast<double>(n));
  const double se_var = want.var * std::sqrt(2.0 / static_cast<double>(n - 1));
  const bool ok = std::abs(mean - want.mean) < 4.0 * se_mean &&
                  std::abs(var - want.var) < 4.0 * se_var;
  return check_line("Langevin chain matches closed-form kernel composition", ok);
}

bool check_nash() {
  // The revision kernel fixes p_theta only up to an O(l * delta^4) variance
  // defect, so the residuals reach 1e-10 in the small-step regime.
  const GaussianTestbed t = GaussianTestbed::nash(0.5, 1.2, 0.4);
  const NashResiduals r = nash_residuals(t, 0.05, 15);
  const bool ok = r.r_theta < 1e-10 && r.r_alpha < 1e-10 && r.r_beta < 1e-10;
  return check_line("Nash residuals vanish at the analytic equilibrium", ok);
}

bool check_roundtrips() {
  RunConfig cfg;
  cfg.dataset.kind = "ring";
  cfg.train.gamma = 0.25;
  const std::string once = serialize_config(cfg);
  const std::string twice = serialize_config(parse_config(once));
  bool ok = once == twice;

  const std::string path =
      (fs::temp_directory_path() / "ebmvae_check_ckpt.bin").string();
  TestbedModels models = make_testbed_models(GaussianTestbed::nash(0.0, 1.0, 0.5));
  AdamState ot(models.energy->params()), oa(models.generator->params()),
      ob(models.encoder->params());
  const Checkpoint saved = make_checkpoint(7, 42, once, *models.energy, *models.generator,
                                           *models.encoder, ot, oa, ob);
  save_checkpoint(path, saved);
  const Checkpoint loaded = load_checkpoint(path);
  ok = ok && loaded.iter == 7 && loaded.seed == 42 && loaded.config_text == once &&
       loaded.arrays.size() == saved.arrays.size();
  for (std::size_t i = 0; ok && i < saved.arrays.size(); ++i)
    ok = saved.arrays[i] == loaded.arrays[i];
  fs::remove(path);
  return check_line("config and checkpoint round-trips", ok);
}

int run_check() {
  bool all = true;
  all = check_gradients() && all;
  all = check_partition() && all;
  all = check_kernel() && all;
  all = check_nash() && all;
  all = check_roundtrips() && all;
  std::printf(all ? "all self-tests passed\n" : "self-tests FAILED\n");
  return all ? 0 : 1;
}

// ----- subcommand bodies -----------------------------------------------------

int run_train(const ConfigFlags& flags, bool resume, bool conditional) {
  const RunConfig cfg = assemble_config(flags);
  const TrainOutcome out = conditional ? run_conditional_training(cfg, resume)
                                       : run_training(cfg, resume);
  std::printf("run directory: %s\n", out.paths.dir.c_str());
  std::printf("iterations run: %zu\n", out.iterations_run);
  print_report(out.last);
  if (!out.trace.entries.empty()) {
    const DivergenceEntry& e = out.trace.entries.back();
    if (e.kl_data_ebm) std::printf("KL(data || ebm) %.6g\n", *e.kl_data_ebm);
    if (e.kl_ebm_gen) std::printf("KL(ebm || generator) %.6g\n", *e.kl_ebm_gen);
    if (e.kl_enc_post) std::printf("KL(encoder || posterior) %.6g\n", *e.kl_enc_post);
  }
  return 0;
}

int run_sample(const std::string& ckpt_path, std::size_t n, int steps_override,
               double delta_override, std::uint64_t seed, const std::string& out_csv) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const RunConfig cfg = checkpoint_config(c);
  BuiltModels models = build_models(cfg, dataset_dim(cfg.dataset));
  AdamState ot, oa, ob;
  restore_checkpoint(c, *models.energy, *models.generator, *models.encoder, ot, oa, ob);
  SamplerConfig scfg = cfg.train.sampler;
  if (steps_override >= 0) scfg.steps = steps_override;
  if (delta_override > 0.0) scfg.step_size = delta_override;
  scfg.seed = derive_seed(seed, 811);
  const AncestralChain chain =
      ancestral_langevin_sample(*models.generator, *models.energy, n, scfg);
  write_points_csv(out_csv, chain.chain.final_x);
  std::printf("wrote %zu samples to %s (l=%d)\n", n, out_csv.c_str(), scfg.steps);
  if (chain.chain.final_x.cols() == 2 && cfg.grid.dims == 2) {
    const std::string ppm = out_csv + ".ppm";
    const ScatterGroup grp{&chain.chain.final_x, 220, 60, 40};
    write_ppm(ppm, render_scatter({grp}, cfg.grid, 440));
    std::printf("wrote %s\n", ppm.c_str());
  }
  std::printf("energy gap (initial - revised): %.6g\n",
              energy_gap(*models.energy, chain.chain.initial, chain.chain.final_x));
  return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& inline_y,
                const std::string& y_file, int steps_override, const std::string& out_csv) {
  const Checkpoint c = load_checkpoint(ckpt_path);
  const RunConfig cfg = checkpoint_config(c);
  const std::size_t data_dim = dataset_dim(cfg.dataset);
  CondBuilt models = build_cond_models(cfg, data_dim, cfg.cond_y_dim);
  AdamState ot, oa, ob;
  restore_checkpoint_stores(c, models.energy->net.params(), models.generator->net.params(),
                            models.encoder->net.params(), ot, oa, ob);
  const Tensor ys = parse_y_values(inline_y, y_file, cfg.cond_y_dim);
  SamplerConfig scfg = cfg.train.sampler;
  scfg.noise_enabled = false;
  if (steps_override >= 0) scfg.steps = steps_override;
  const Tensor xs = conditional_predict(*models.generator, *models.energy, ys, scfg);
  write_points_csv(out_csv, xs);
  std::printf("wrote %zu predictions to %s\n", xs.rows(), out_csv.c_str());
  return 0;
}

int run_testbed_cmd(double mean, double std_dev, double sigma, std::size_t iterations,
                    std::size_t batch, double gamma, double delta, int steps,
                    double lr_theta, double lr_ab, std::uint64_t seed,
                    const std::string& metrics_path) {
  TrainConfig t;
  t.iterations = iterations;
  t.data_batch = batch;
  t.synth_batch = batch;
  t.gamma = gamma;
  t.sampler.steps = steps;
  t.sampler.step_size = delta;
  t.adam_theta.lr = lr_theta;
  t.adam_alpha.lr = lr_ab;
  t.adam_beta.lr = lr_ab;
  t.seed = seed;
  t.eval_every = std::max<std::size_t>(1, iterations / 50);
  const TestbedOutcome out = run_testbed(mean, std_dev, sigma, t, metrics_path);
  const GaussianTestbed& f = out.final_state;
  const Gaussian1D p = f.ebm_density();
  const Gaussian1D q = f.generator_marginal();
  std::printf("energy: theta1 %.6g theta2 %.6g  => p_theta N(%.6g, %.6g^2)\n", f.theta1,
              f.theta2, p.mean, std::sqrt(p.var));
  std::printf("generator: a %.6g b %.6g sigma %.6g  => q_alpha N(%.6g, %.6g^2)\n", f.a,
              f.b, f.sigma, q.mean, std::sqrt(q.var));
  std::printf("encoder: u %.6g c %.6g w %.6g\n", f.u, f.c, f.w);
  std::printf("nash residuals: r_theta %.6g  r_alpha %.6g  r_beta %.6g\n",
              out.residuals.r_theta, out.residuals.r_alpha, out.residuals.r_beta);
  if (!out.trace.entries.empty() && out.trace.entries.back().kl_data_ebm)
    std::printf("KL(data || p_theta) = %.6g\n", *out.trace.entries.back().kl_data_ebm);
  return 0;
}

int run_eval(const std::string& ckpt_path, std::size_t n, std::uint64_t seed,
             const std::string& samples_out) {
  const EvalOutcome out = evaluate_checkpoint(ckpt_path, n, seed);
  if (out.kl_data_ebm) std::printf("KL(data || ebm) %.6g\n", *out.kl_data_ebm);
  if (out.kl_ebm_gen) std::printf("KL(ebm || generator) %.6g\n", *out.kl_ebm_gen);
  std::printf("energy gap %.6g\n", out.energy_gap);
  if (!out.coverage.empty()) {
    double lo = 1.0;
    std::printf("mode coverage:");
    for (double f : out.coverage) {
      std::printf(" %.4f", f);
      lo = std::min(lo, f);
    }
    std::printf("  (min %.4f)\n", lo);
  }
  if (!samples_out.empty()) {
    write_points_csv(samples_out, out.revised);
    std::printf("wrote samples to %s\n", samples_out.c_str());
  }
  return 0;
}

int run_sweep(const ConfigFlags& flags, const std::string& steps_list,
              const std::string& delta_list, const std::string& gamma_list,
              const std::string& latent_list, std::uint64_t eval_seed) {
  const RunConfig base = assemble_config(flags);
  std::string key, list;
  int picked = 0;
  if (!steps_list.empty()) key = "langevin.steps", list = steps_list, ++picked;
  if (!delta_list.empty()) key = "langevin.step_size", list = delta_list, ++picked;
  if (!gamma_list.empty()) key = "train.gamma", list = gamma_list, ++picked;
  if (!latent_list.empty()) key = "model.latent_dim", list = latent_list, ++picked;
  if (picked != 1)
    throw ContractError("sweep needs exactly one of --steps/--delta/--gamma/--latent");

  std::vector<std::string> values;
  std::stringstream ss(list);
  std::string part;
  while (std::getline(ss, part, ',')) values.push_back(part);
  if (values.empty()) throw ContractError("sweep value list is empty");

  const std::string tag = key.substr(key.find('.') + 1);
  const std::string summary_path =
      (fs::path(resolved_out_root(base)) / (base.name + "_sweep.csv")).string();
  std::ofstream summary(summary_path, std::ios::trunc);
  if (!summary) throw IoError("cannot open sweep summary: " + summary_path);
  summary << "param,value,kl_data_ebm,kl_ebm_gen,energy_gap,min_coverage,run_dir\n";
  for (const std::string& v : values) {
    RunConfig cfg = base;
    apply_override(cfg, key, v);
    cfg.name = base.name + "_" + tag + "_" + v;
    validate_config(cfg);
    std::printf("== sweep %s = %s -> %s\n", key.c_str(), v.c_str(), cfg.name.c_str());
    const TrainOutcome run = run_training(cfg, /*resume=*/false);
    const EvalOutcome ev =
        evaluate_checkpoint(run.paths.checkpoint_file, 10000, eval_seed);
    double min_cov = std::numeric_limits<double>::quiet_NaN();
    for (double f : ev.coverage) min_cov = std::isnan(min_cov) ? f : std::min(min_cov, f);
    summary << tag << "," << v << ",";
    summary << (ev.kl_data_ebm ? std::to_string(*ev.kl_data_ebm) : "") << ",";
    summary << (ev.kl_ebm_gen ? std::to_string(*ev.kl_ebm_gen) : "") << ",";
    summary << ev.energy_gap << ",";
    summary << (ev.coverage.empty() ? "" : std::to_string(min_cov)) << ",";
    summary << run.paths.dir << "\n";
    summary.flush();
  }
  std::printf("sweep summary: %s\n", summary_path.c_str());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"energy-based model with a VAE amortized sampler"};
  app.require_subcommand(1);

  // train / train-cond
  ConfigFlags train_flags, cond_flags, sweep_flags;
  bool train_resume = false, cond_resume = false;
  CLI::App* train = app.add_subcommand("train", "joint EBM + VAE training run");
  register_config_flags(train, train_flags);
  train->add_flag("--resume", train_resume, "resume from the run's checkpoint");
  CLI::App* traincond =
      app.add_subcommand("train-cond", "conditional training (leading columns as y)");
  register_config_flags(traincond, cond_flags);
  traincond->add_flag("--resume", cond_resume, "resume from the run's checkpoint");

  // sample
  std::string sample_ckpt, sample_out = "samples.csv";
  std::size_t sample_n = 1000;
  int sample_steps = -1;
  double sample_delta = 0.0;
  std::uint64_t sample_seed = 0;
  CLI::App* sample =
      app.add_subcommand("sample", "ancestral Langevin samples from a checkpoint");
  sample->add_option("--checkpoint", sample_ckpt, "checkpoint file")->required();
  sample->add_option("--n", sample_n, "number of samples");
  sample->add_option("--steps", sample_steps, "override revision steps (0: ancestral only)");
  sample->add_option("--delta", sample_delta, "override step size");
  sample->add_option("--seed", sample_seed, "sampling seed");
  sample->add_option("--out", sample_out, "output CSV");

  // predict
  std::string pred_ckpt, pred_y, pred_yfile, pred_out = "predictions.csv";
  int pred_steps = -1;
  CLI::App* predict =
      app.add_subcommand("predict", "deterministic conditional prediction");
  predict->add_option("--checkpoint", pred_ckpt, "conditional checkpoint")->required();
  predict->add_option("--y", pred_y, "inline conditions, comma separated");
  predict->add_option("--y-file", pred_yfile, "CSV of conditions");
  predict->add_option("--steps", pred_steps, "override refinement steps");
  predict->add_option("--out", pred_out, "output CSV");

  // testbed
  double tb_mean = 2.0, tb_std = 0.5, tb_sigma = 0.3, tb_gamma = 1.0, tb_delta = 0.3;
  double tb_lr_theta = 0.01, tb_lr_ab = 0.01;
  std::size_t tb_iters = 5000, tb_batch = 128;
  int tb_steps = 15;
  std::uint64_t tb_seed = 0;
  std::string tb_metrics;
  CLI::App* testbed =
      app.add_subcommand("testbed", "linear-Gaussian run with closed-form diagnostics");
  testbed->add_option("--mean", tb_mean, "data mean");
  testbed->add_option("--std", tb_std, "data standard deviation");
  testbed->add_option("--sigma", tb_sigma, "generator noise std");
  testbed->add_option("--iterations", tb_iters, "training iterations");
  testbed->add_option("--batch", tb_batch, "batch size (data and chains)");
  testbed->add_option("--gamma", tb_gamma, "KL-to-prior weight");
  testbed->add_option("--delta", tb_delta, "Langevin step size");
  testbed->add_option("--steps", tb_steps, "Langevin steps");
  testbed->add_option("--lr-theta", tb_lr_theta, "energy learning rate");
  testbed->add_option("--lr-ab", tb_lr_ab, "generator/encoder learning rate");
  testbed->add_option("--seed", tb_seed, "seed");
  testbed->add_option("--metrics", tb_metrics, "optional metrics CSV path");

  // eval
  std::string eval_ckpt, eval_samples_out;
  std::size_t eval_n = 10000;
  std::uint64_t eval_seed = 1;
  CLI::App* evalc = app.add_subcommand("eval", "grid KL / coverage for a checkpoint");
  evalc->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evalc->add_option("--n", eval_n, "evaluation sample count");
  evalc->add_option("--seed", eval_seed, "evaluation seed");
  evalc->add_option("--samples-out", eval_samples_out, "optional samples CSV");

  // sweep
  std::string sw_steps, sw_delta, sw_gamma, sw_latent;
  std::uint64_t sw_eval_seed = 1;
  CLI::App* sweep =
      app.add_subcommand("sweep", "one run per value along a single config axis");
  register_config_flags(sweep, sweep_flags);
  sweep->add_option("--steps", sw_steps, "comma list for langevin.steps");
  sweep->add_option("--delta", sw_delta, "comma list for langevin.step_size");
  sweep->add_option("--gamma", sw_gamma, "comma list for train.gamma");
  sweep->add_option("--latent", sw_latent, "comma list for model.latent_dim");
  sweep->add_option("--eval-seed", sw_eval_seed, "seed for post-run evaluation");

  CLI::App* check = app.add_subcommand("check", "gradient and oracle self-tests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // help exits with 0, usage errors nonzero
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return run_train(train_flags, train_resume, false);
    if (traincond->parsed()) return run_train(cond_flags, cond_resume, true);
    if (sample->parsed())
      return run_sample(sample_ckpt, sample_n, sample_steps, sample_delta, sample_seed,
                        sample_out);
    if (predict->parsed())
      return run_predict(pred_ckpt, pred_y, pred_yfile, pred_steps, pred_out);
    if (testbed->parsed())
      return run_testbed_cmd(tb_mean, tb_std, tb_sigma, tb_iters, tb_batch, tb_gamma,
                             tb_delta, tb_steps, tb_lr_theta, tb_lr_ab, tb_seed,
                             tb_metrics);
    if (evalc->parsed())
      return run_eval(eval_ckpt, eval_n, eval_seed, eval_samples_out);
    if (sweep->parsed())
      return run_sweep(sweep_flags, sw_steps, sw_delta, sw_gamma, sw_latent, sw_eval_seed);
    if (check->parsed()) return run_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "no subcommand given\n";
  return 2;
}

}  // namespace ebmvae
