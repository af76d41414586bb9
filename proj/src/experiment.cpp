#include "ebmvae/experiment.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ebmvae/datasets.hpp"
#include "ebmvae/errors.hpp"
#include "ebmvae/figures.hpp"
#include "ebmvae/metrics.hpp"
#include "ebmvae/rng.hpp"
#include "ebmvae/sampling.hpp"

namespace ebmvae {

namespace {

constexpr std::uint64_t kStreamInitEnergy = 501;
constexpr std::uint64_t kStreamInitGenerator = 502;
constexpr std::uint64_t kStreamInitEncoder = 503;
constexpr std::uint64_t kStreamEval = 601;
constexpr std::uint64_t kStreamFinalFigures = 602;
constexpr std::uint64_t kStreamTestbedData = 302;
constexpr std::uint64_t kStreamEvalSamples = 303;

namespace fs = std::filesystem;

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path);
}

// Write-then-rename so an interrupted save never corrupts the previous file.
void save_checkpoint_atomic(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  save_checkpoint(tmp, c);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path);
}

Tensor first_rows(const Tensor& t, std::size_t k) {
  const std::size_t n = std::min(k, t.rows());
  Tensor out = Tensor::matrix(n, t.cols());
  std::memcpy(out.data(), t.data(), n * t.cols() * sizeof(double));
  return out;
}

Tensor columns(const Tensor& t, std::size_t first, std::size_t count) {
  Tensor out = Tensor::matrix(t.rows(), count);
  for (std::size_t r = 0; r < t.rows(); ++r)
    std::memcpy(out.row_ptr(r), t.row_ptr(r) + first, count * sizeof(double));
  return out;
}

// Resuming may extend/retime the run (iteration count, eval and checkpoint
// cadence) but everything that shapes models or per-iteration dynamics must
// match the checkpoint.
void require_resumable(const Checkpoint& c, const RunConfig& cfg) {
  RunConfig old = parse_config(c.config_text);
  old.train.iterations = cfg.train.iterations;
  old.train.eval_every = cfg.train.eval_every;
  old.train.checkpoint_every = cfg.train.checkpoint_every;
  if (serialize_config(old) != serialize_config(cfg))
    throw ConfigError(
        "checkpoint config does not match the requested run (only iteration count and "
        "eval/checkpoint cadence may change on resume)");
}

}  // namespace

RunPaths run_paths(const RunConfig& cfg) {
  RunPaths p;
  p.dir = (fs::path(resolved_out_root(cfg)) / cfg.name).string();
  p.config_file = (fs::path(p.dir) / "config.ini").string();
  p.metrics_csv = (fs::path(p.dir) / "metrics.csv").string();
  p.checkpoint_file = (fs::path(p.dir) / "checkpoint.bin").string();
  p.figures_dir = (fs::path(p.dir) / "figures").string();
  return p;
}

BuiltModels build_models(const RunConfig& cfg, std::size_t data_dim) {
  const std::size_t d = resolved_latent_dim(cfg);
  BuiltModels b;
  b.energy = std::make_unique<MlpEnergy>(data_dim, cfg.energy_hidden,
                                         derive_seed(cfg.train.seed, kStreamInitEnergy),
                                         act_from_name(cfg.energy_act));
  b.generator = std::make_unique<MlpGenerator>(
      d, data_dim, cfg.gen_hidden, cfg.sigma,
      derive_seed(cfg.train.seed, kStreamInitGenerator), act_from_name(cfg.gen_out_act));
  b.encoder = std::make_unique<MlpEncoder>(data_dim, d, cfg.enc_hidden,
                                           derive_seed(cfg.train.seed, kStreamInitEncoder));
  return b;
}

CondBuilt build_cond_models(const RunConfig& cfg, std::size_t x_dim, std::size_t y_dim) {
  const std::size_t d =
      cfg.latent_dim != 0 ? cfg.latent_dim : std::min<std::size_t>(200, x_dim);
  CondBuilt b;
  b.energy = std::make_unique<CondEnergyNet>(x_dim, y_dim, cfg.energy_hidden,
                                             derive_seed(cfg.train.seed, kStreamInitEnergy));
  b.generator = std::make_unique<CondGeneratorNet>(
      d, x_dim, y_dim, cfg.gen_hidden, cfg.sigma,
      derive_seed(cfg.train.seed, kStreamInitGenerator), act_from_name(cfg.gen_out_act));
  b.encoder = std::make_unique<CondEncoderNet>(d, x_dim, y_dim, cfg.enc_hidden,
                                               derive_seed(cfg.train.seed, kStreamInitEncoder));
  return b;
}

RunConfig checkpoint_config(const Checkpoint& c) {
  RunConfig cfg = parse_config(c.config_text);
  validate_config(cfg);
  return cfg;
}

TrainOutcome run_training(const RunConfig& cfg, bool resume) {
  validate_config(cfg);
  TrainOutcome out;
  out.paths = run_paths(cfg);
  std::error_code ec;
  fs::create_directories(out.paths.dir, ec);
  if (ec) throw IoError("cannot create run directory: " + out.paths.dir);
  const std::string echo = serialize_config(cfg);
  write_text_file(out.paths.config_file, echo);

  const Dataset data = dataset_generate(cfg.dataset, cfg.dataset.n, cfg.train.seed);
  BuiltModels models = build_models(cfg, data.xs.cols());
  AdamState opt_theta, opt_alpha, opt_beta;

  std::size_t start_iter = 0;
  if (resume && fs::exists(out.paths.checkpoint_file)) {
    const Checkpoint c = load_checkpoint(out.paths.checkpoint_file);
    require_resumable(c, cfg);
    restore_checkpoint(c, *models.energy, *models.generator, *models.encoder, opt_theta,
                       opt_alpha, opt_beta);
    start_iter = c.iter;
  }

  MetricsLog metrics(out.paths.metrics_csv);
  const bool grid_ok = data.xs.cols() == cfg.grid.dims;
  const bool enc_ok = resolved_latent_dim(cfg) <= 2;
  TrainHooks hooks;
  hooks.on_eval = [&](std::size_t iter, const LossReport& report) {
    out.last = report;
    const DivergenceEntry entry =
        grid_ok || enc_ok
            ? neural_divergence_entry(iter, *models.energy, *models.generator,
                                      models.encoder.get(), data.xs, cfg.grid,
                                      grid_ok ? 8192 : 0,
                                      derive_seed(cfg.train.seed, iter, kStreamEval))
            : DivergenceEntry{iter, {}, {}, {}};
    divergence_trace_update(out.trace, entry);
    metrics.append(iter, report, &entry);
  };
  hooks.on_checkpoint = [&](std::size_t iter) {
    save_checkpoint_atomic(out.paths.checkpoint_file,
                           make_checkpoint(iter, cfg.train.seed, echo, *models.energy,
                                           *models.generator, *models.encoder, opt_theta,
                                           opt_alpha, opt_beta));
  };

  train_loop(*models.energy, *models.generator, *models.encoder, opt_theta, opt_alpha,
             opt_beta, data.xs, cfg.train, start_iter, hooks);
  out.iterations_run = cfg.train.iterations - start_iter;

  SamplerConfig fig_cfg = cfg.train.sampler;
  fig_cfg.seed = derive_seed(cfg.train.seed, kStreamFinalFigures);
  fig_cfg.record_frames = true;
  const std::size_t fig_n = std::min<std::size_t>(1024, data.xs.rows());
  const AncestralChain chain =
      ancestral_langevin_sample(*models.generator, *models.energy, fig_n, fig_cfg);
  emit_figures(out.paths.figures_dir, *models.energy, *models.generator,
               first_rows(data.xs, fig_n), chain.chain.initial, chain.chain.final_x,
               chain.chain.frames, cfg.grid, cfg.train.seed);
  return out;
}

TrainOutcome run_conditional_training(const RunConfig& cfg, bool resume) {
  validate_config(cfg);
  if (cfg.train.data_batch != cfg.train.synth_batch)
    throw ConfigError("conditional training needs train.data_batch == train.synth_batch");
  TrainOutcome out;
  out.paths = run_paths(cfg);
  std::error_code ec;
  fs::create_directories(out.paths.dir, ec);
  if (ec) throw IoError("cannot create run directory: " + out.paths.dir);
  const std::string echo = serialize_config(cfg);
  write_text_file(out.paths.config_file, echo);

  const Dataset data = dataset_generate(cfg.dataset, cfg.dataset.n, cfg.train.seed);
  const std::size_t y_dim = cfg.cond_y_dim;
  const Tensor ys = columns(data.xs, 0, y_dim);
  CondBuilt models = build_cond_models(cfg, data.xs.cols(), y_dim);
  AdamState opt_theta, opt_alpha, opt_beta;

  std::size_t start_iter = 0;
  if (resume && fs::exists(out.paths.checkpoint_file)) {
    const Checkpoint c = load_checkpoint(out.paths.checkpoint_file);
    require_resumable(c, cfg);
    restore_checkpoint_stores(c, models.energy->net.params(),
                              models.generator->net.params(),
                              models.encoder->net.params(), opt_theta, opt_alpha,
                              opt_beta);
    start_iter = c.iter;
  }

  MetricsLog metrics(out.paths.metrics_csv);
  const TrainConfig& t = cfg.train;
  for (std::size_t iter = start_iter; iter < t.iterations; ++iter) {
    const std::vector<std::size_t> rows =
        minibatch_rows(data.xs.rows(), t.data_batch, t.seed, iter);
    Tensor xb = Tensor::matrix(rows.size(), data.xs.cols());
    Tensor yb = Tensor::matrix(rows.size(), y_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::memcpy(xb.row_ptr(i), data.xs.row_ptr(rows[i]), data.xs.cols() * sizeof(double));
      std::memcpy(yb.row_ptr(i), ys.row_ptr(rows[i]), y_dim * sizeof(double));
    }
    auto checkpoint_now = [&](std::size_t at) {
      save_checkpoint_atomic(
          out.paths.checkpoint_file,
          make_checkpoint_stores(at, t.seed, echo, models.energy->net.params(),
                                 models.generator->net.params(),
                                 models.encoder->net.params(), opt_theta, opt_alpha,
                                 opt_beta));
    };
    LossReport report;
    try {
      report = conditional_train_iteration(*models.energy, *models.generator,
                                           *models.encoder, opt_theta, opt_alpha, opt_beta,
                                           yb, xb, t, iter);
    } catch (const DivergedChainError&) {
      checkpoint_now(iter);
      throw;
    }
    const std::size_t done = iter + 1;
    const bool last = done == t.iterations;
    if (last || (t.eval_every > 0 && done % t.eval_every == 0)) {
      out.last = report;
      const DivergenceEntry entry{done, {}, {}, {}};
      divergence_trace_update(out.trace, entry);
      metrics.append(done, report, &entry);
    }
    if (last || (t.checkpoint_every > 0 && done % t.checkpoint_every == 0))
      checkpoint_now(done);
  }
  out.iterations_run = t.iterations - start_iter;
  return out;
}

TestbedOutcome run_testbed(double m_star, double s_star, double sigma,
                           const TrainConfig& train, const std::string& metrics_path) {
  if (!(s_star > 0.0) || !(sigma > 0.0))
    throw ContractError("run_testbed needs positive s_star and sigma");
  GaussianTestbed init;
  init.m_star = m_star;
  init.s_star = s_star;
  init.sigma = sigma;
  TestbedModels models = make_testbed_models(init);

  Tensor data = Tensor::matrix(std::max<std::size_t>(train.data_batch * 8, 4096), 1);
  Rng rng(derive_seed(train.seed, kStreamTestbedData));
  for (std::size_t i = 0; i < data.rows(); ++i)
    data.at(i, 0) = m_star + s_star * rng.normal();

  AdamState opt_theta, opt_alpha, opt_beta;
  TestbedOutcome out;
  std::unique_ptr<MetricsLog> metrics;
  if (!metrics_path.empty()) metrics = std::make_unique<MetricsLog>(metrics_path);
  TrainHooks hooks;
  hooks.on_eval = [&](std::size_t iter, const LossReport& report) {
    out.last = report;
    const GaussianTestbed snap = snapshot_testbed(*models.energy, *models.generator,
                                                  *models.encoder, m_star, s_star);
    const DivergenceEntry entry = testbed_divergence_entry(iter, snap);
    divergence_trace_update(out.trace, entry);
    if (metrics) metrics->append(iter, report, &entry);
  };
  train_loop(*models.energy, *models.generator, *models.encoder, opt_theta, opt_alpha,
             opt_beta, data, train, 0, hooks);

  out.final_state = snapshot_testbed(*models.energy, *models.generator, *models.encoder,
                                     m_star, s_star);
  out.residuals =
      nash_residuals(out.final_state, train.sampler.step_size, train.sampler.steps);
  return out;
}

EvalOutcome evaluate_checkpoint(const std::string& checkpoint_path, std::size_t n_samples,
                                std::uint64_t eval_seed) {
  const Checkpoint c = load_checkpoint(checkpoint_path);
  const RunConfig cfg = checkpoint_config(c);
  const std::size_t data_dim = dataset_dim(cfg.dataset);
  BuiltModels models = build_models(cfg, data_dim);
  AdamState ot, oa, ob;
  restore_checkpoint(c, *models.energy, *models.generator, *models.encoder, ot, oa, ob);

  SamplerConfig scfg = cfg.train.sampler;
  scfg.seed = derive_seed(eval_seed, kStreamEvalSamples);
  const AncestralChain chain =
      ancestral_langevin_sample(*models.generator, *models.energy, n_samples, scfg);

  EvalOutcome out;
  out.initial = chain.chain.initial;
  out.revised = chain.chain.final_x;
  out.energy_gap = energy_gap(*models.energy, out.initial, out.revised);
  if (data_dim == cfg.grid.dims) {
    const Dataset fresh =
        dataset_generate(cfg.dataset, cfg.dataset.n, derive_seed(eval_seed, 7));
    const std::vector<double> ebm_cells = grid_cells_energy(*models.energy, cfg.grid);
    out.kl_data_ebm =
        grid_kl_cells(grid_cells_histogram(fresh.xs, cfg.grid), ebm_cells);
    out.kl_ebm_gen = grid_kl_cells(ebm_cells, grid_cells_histogram(out.revised, cfg.grid));
  }
  if (cfg.dataset.kind == "gaussian_grid") {
    const Tensor centers =
        gaussian_grid_centers(cfg.dataset.kx, cfg.dataset.ky, cfg.dataset.span);
    out.coverage = mode_coverage(out.revised, centers, 3.0 * cfg.dataset.mode_std);
  }
  return out;
}

}  // namespace ebmvae
