#pragma once

#include <cstdint>
#include <functional>

#include "ebmvae/models.hpp"
#include "ebmvae/sampling.hpp"
#include "ebmvae/tensor.hpp"

namespace ebmvae {

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter-store Adam moments with bias correction.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const ParamStore& params);

  void step(ParamStore& params, const ParamStore& grads, const AdamParams& hp);

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  ParamStore& m() { return m_; }
  ParamStore& v() { return v_; }
  const ParamStore& m() const { return m_; }
  const ParamStore& v() const { return v_; }

 private:
  ParamStore m_, v_;
  long t_ = 0;
};

// Sugar: out-of-class entry point matching the rest of the op surface.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
               const AdamParams& hp);

struct TrainConfig {
  std::size_t iterations = 10000;
  std::size_t data_batch = 64;
  std::size_t synth_batch = 64;  // chains per iteration
  double gamma = 2.0;            // weight on the KL-to-prior term
  SamplerConfig sampler;         // sampler.seed is ignored; per-iteration seeds derive from `seed`
  AdamParams adam_theta{1e-4, 0.5, 0.999, 1e-8};
  AdamParams adam_alpha{3e-4, 0.5, 0.999, 1e-8};
  AdamParams adam_beta{3e-4, 0.5, 0.999, 1e-8};
  double weight_decay_theta = 0.0;  // optional L2 on energy params
  std::uint64_t seed = 0;
  std::size_t eval_every = 500;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
};

struct LossReport {
  double energy_data = 0.0;     // mean U over the data batch (pre-update)
  double energy_initial = 0.0;  // mean U over ancestral draws
  double energy_revised = 0.0;  // mean U over Langevin-revised samples
  double energy_gap = 0.0;      // energy_initial - energy_revised
  double recon = 0.0;           // mean per-example negative log conditional
  double kl_prior = 0.0;        // mean per-example KL(encoder || prior), unweighted
  double vae_loss = 0.0;        // recon + gamma * kl_prior
};

// (1/n) sum dU(data_i)/dtheta - (1/m) sum dU(sample_j)/dtheta.
ParamStore ebm_grad(const EnergyModel& m, const Tensor& data, const Tensor& samples);

struct VaeLossResult {
  double loss = 0.0;   // recon + gamma * kl, per-example mean
  double recon = 0.0;
  double kl = 0.0;
  ParamStore grad_alpha;
  ParamStore grad_beta;
};

// Negative ELBO with one reparameterized latent draw per example (per-row
// streams of `seed`); gradients w.r.t. generator and encoder parameters only.
VaeLossResult vae_loss(const GeneratorModel& g, const InferenceModel& e,
                       const Tensor& samples, double gamma, std::uint64_t seed);

// KL(N(mu, diag(v)) || N(0, I)) = 1/2 sum_j (v_j + mu_j^2 - 1 - log v_j).
// Rank-1 inputs give the exact value; rank-2 inputs average over rows.
double kl_diag_gaussian_to_prior(const Tensor& mu, const Tensor& v);

// One joint update: sample synthesis, energy update, then VAE update on the
// revised samples. `iter` seeds this iteration's randomness via derive_seed,
// so any iteration is reproducible from (cfg.seed, iter) alone.
LossReport train_iteration(EnergyModel& m, GeneratorModel& g, InferenceModel& e,
                           AdamState& opt_theta, AdamState& opt_alpha,
                           AdamState& opt_beta, const Tensor& data_batch,
                           const TrainConfig& cfg, std::size_t iter);

struct TrainHooks {
  // Called every cfg.eval_every iterations and after the last one; `report` is
  // the latest iteration's losses.
  std::function<void(std::size_t iter, const LossReport& report)> on_eval;
  // Checkpoint cadence, final iteration, and divergence aborts.
  std::function<void(std::size_t iter)> on_checkpoint;
};

// Shuffled-minibatch loop from start_iter (resume point) to cfg.iterations.
// Minibatch order is a pure function of (cfg.seed, epoch), so a resumed run
// replays the identical batch sequence. On chain divergence a checkpoint hook
// fires before the error propagates.
void train_loop(EnergyModel& m, GeneratorModel& g, InferenceModel& e,
                AdamState& opt_theta, AdamState& opt_alpha, AdamState& opt_beta,
                const Tensor& dataset, const TrainConfig& cfg, std::size_t start_iter,
                const TrainHooks& hooks);

// Deterministic minibatch row selection shared by train_loop and resume logic.
std::vector<std::size_t> minibatch_rows(std::size_t dataset_rows, std::size_t batch,
                                        std::uint64_t seed, std::size_t iter);

}  // namespace ebmvae
