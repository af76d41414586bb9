#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ebmvae/checkpoint.hpp"
#include "ebmvae/conditional.hpp"
#include "ebmvae/config.hpp"
#include "ebmvae/diagnostics.hpp"
#include "ebmvae/training.hpp"

namespace ebmvae {

// Filesystem layout of one run: <out_root>/<name>/{config.ini, metrics.csv,
// checkpoint.bin, figures/}.
struct RunPaths {
  std::string dir;
  std::string config_file;
  std::string metrics_csv;
  std::string checkpoint_file;
  std::string figures_dir;
};

RunPaths run_paths(const RunConfig& cfg);

struct BuiltModels {
  std::unique_ptr<MlpEnergy> energy;
  std::unique_ptr<MlpGenerator> generator;
  std::unique_ptr<MlpEncoder> encoder;
};

// Networks sized from the config; init seeds derive from the run seed.
BuiltModels build_models(const RunConfig& cfg, std::size_t data_dim);

struct CondBuilt {
  std::unique_ptr<CondEnergyNet> energy;
  std::unique_ptr<CondGeneratorNet> generator;
  std::unique_ptr<CondEncoderNet> encoder;
};

CondBuilt build_cond_models(const RunConfig& cfg, std::size_t x_dim, std::size_t y_dim);

struct TrainOutcome {
  LossReport last;
  DivergenceTrace trace;
  RunPaths paths;
  std::size_t iterations_run = 0;
};

// Full unconditional pipeline: dataset, models, training loop with metrics /
// checkpoint hooks, final figures. resume=true restarts from the run's
// checkpoint when one exists (the checkpoint's config echo must match).
TrainOutcome run_training(const RunConfig& cfg, bool resume);

// Conditional pipeline on the same layout: the first cond.y_dim data columns
// are the condition, the full point is the target. No figures; use `predict`.
TrainOutcome run_conditional_training(const RunConfig& cfg, bool resume);

struct TestbedOutcome {
  GaussianTestbed final_state;
  NashResiduals residuals;  // at (delta, steps) of the sampler used
  DivergenceTrace trace;    // closed-form entries at the eval cadence
  LossReport last;
};

// Linear-Gaussian run with the closed-form models: data N(m_star, s_star^2),
// generator noise sigma. metrics_path may be empty to skip CSV output.
TestbedOutcome run_testbed(double m_star, double s_star, double sigma,
                           const TrainConfig& train, const std::string& metrics_path);

struct EvalOutcome {
  std::optional<double> kl_data_ebm;
  std::optional<double> kl_ebm_gen;
  std::vector<double> coverage;  // per mode; empty unless gaussian_grid
  double energy_gap = 0.0;
  Tensor initial;  // ancestral draws
  Tensor revised;  // after the Langevin revision
};

// Rebuild models from a checkpoint (config echo included) and measure sample
// quality with n_samples fresh chains.
EvalOutcome evaluate_checkpoint(const std::string& checkpoint_path, std::size_t n_samples,
                                std::uint64_t eval_seed);

// Parse + validate the checkpoint's embedded config.
RunConfig checkpoint_config(const Checkpoint& c);

}  // namespace ebmvae
