#include "ebmvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ebmvae/errors.hpp"
#include "ebmvae/rng.hpp"

namespace ebmvae {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Stream tags (see rng.hpp: all per-iteration randomness is derived, never
// carried across iterations).
constexpr std::uint64_t kStreamVaeEps = 201;
constexpr std::uint64_t kStreamShuffle = 202;
constexpr std::uint64_t kIterSampler = 211;
constexpr std::uint64_t kIterVae = 212;

double batch_mean_energy(const EnergyModel& m, const Tensor& xs) {
  Tensor e = m.energy(xs);
  double s = 0;
  for (std::size_t i = 0; i < e.numel(); ++i) s += e[i];
  return e.numel() ? s / static_cast<double>(e.numel()) : 0.0;
}

void add_scaled(ParamStore& acc, const ParamStore& g, double scale) {
  if (!acc.same_layout(g)) throw ContractError("parameter store layouts differ");
  for (std::size_t i = 0; i < acc.count(); ++i) {
    Tensor& a = acc.value(i);
    const Tensor& b = g.value(i);
    for (std::size_t j = 0; j < a.numel(); ++j) a[j] += scale * b[j];
  }
}

}  // namespace

AdamState::AdamState(const ParamStore& params)
    : m_(ParamStore::zeros_like(params)), v_(ParamStore::zeros_like(params)) {}

void AdamState::step(ParamStore& params, const ParamStore& grads, const AdamParams& hp) {
  if (!params.same_layout(grads))
    throw ContractError("adam: gradient layout does not match parameters");
  if (m_.count() == 0) {
    m_ = ParamStore::zeros_like(params);
    v_ = ParamStore::zeros_like(params);
  }
  if (!m_.same_layout(params))
    throw ContractError("adam: state layout does not match parameters");
  if (!grads.all_finite()) throw ContractError("adam: gradients contain non-finite values");

  t_ += 1;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.count(); ++i) {
    Tensor& p = params.value(i);
    Tensor& m = m_.value(i);
    Tensor& v = v_.value(i);
    const Tensor& g = grads.value(i);
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
               const AdamParams& hp) {
  state.step(params, grads, hp);
}

ParamStore ebm_grad(const EnergyModel& m, const Tensor& data, const Tensor& samples) {
  if (data.cols() != m.dim() || samples.cols() != m.dim())
    throw ContractError("ebm_grad: batch dims do not match energy dim");
  if (!data.all_finite() || !samples.all_finite())
    throw ContractError("ebm_grad: batches contain non-finite values");
  const std::size_t n = data.rows(), k = samples.rows();
  if (n == 0 || k == 0) throw ContractError("ebm_grad: batches must be non-empty");

  std::vector<double> wd(n, 1.0 / static_cast<double>(n));
  std::vector<double> ws(k, -1.0 / static_cast<double>(k));
  ParamStore grad = m.energy_grad_params(data, wd);
  add_scaled(grad, m.energy_grad_params(samples, ws), 1.0);
  return grad;
}

double kl_diag_gaussian_to_prior(const Tensor& mu, const Tensor& v) {
  if (!mu.same_shape(v))
    throw ContractError("kl_diag_gaussian_to_prior: mu and v shapes must match");
  const std::size_t B = mu.rows(), d = mu.cols();
  double total = 0;
  for (std::size_t i = 0; i < B * d; ++i) {
    if (!(v[i] > 0.0))
      throw ContractError("kl_diag_gaussian_to_prior: variance must be positive");
    total += v[i] + mu[i] * mu[i] - 1.0 - std::log(v[i]);
  }
  return 0.5 * total / static_cast<double>(B);
}

VaeLossResult vae_loss(const GeneratorModel& g, const InferenceModel& e,
                       const Tensor& samples, double gamma, std::uint64_t seed) {
  if (gamma < 0.0) throw ContractError("vae_loss: gamma must be nonnegative");
  if (samples.cols() != g.data_dim() || samples.cols() != e.data_dim())
    throw ContractError("vae_loss: sample dim does not match models");
  if (g.latent_dim() != e.latent_dim())
    throw ContractError("vae_loss: generator and encoder latent dims differ");
  if (!samples.all_finite()) throw ContractError("vae_loss: samples contain non-finite values");

  const std::size_t B = samples.rows();
  const std::size_t d = g.latent_dim();
  const std::size_t D = g.data_dim();
  const double sigma = g.sigma();
  const double inv_b = 1.0 / static_cast<double>(B);

  InferOut enc = e.infer(samples);
  Tensor v = enc.logv;
  for (std::size_t i = 0; i < v.numel(); ++i) v[i] = std::exp(v[i]);

  Tensor eps = Tensor::matrix(B, d);
  for (std::size_t i = 0; i < B; ++i) {
    Rng r(derive_seed(seed, i, kStreamVaeEps));
    r.fill_normal(eps.row_ptr(i), d);
  }
  Tensor z = reparameterized_from_eps(enc.mu, v, eps);
  Tensor gmean = g.mean(z);

  // Reconstruction: mean_b [ D/2 log(2 pi sigma^2) + ||x - g(z)||^2 / (2 sigma^2) ].
  const double log_norm = 0.5 * static_cast<double>(D) * std::log(kTwoPi * sigma * sigma);
  double recon = 0;
  Tensor upstream = Tensor::matrix(B, D);
  for (std::size_t i = 0; i < B * D; ++i) {
    const double r = gmean[i] - samples[i];
    recon += r * r;
    upstream[i] = r / (sigma * sigma) * inv_b;
  }
  recon = recon / (2.0 * sigma * sigma) * inv_b + log_norm;

  const double kl = kl_diag_gaussian_to_prior(enc.mu, v);

  VaeLossResult out;
  out.recon = recon;
  out.kl = kl;
  out.loss = recon + gamma * kl;
  if (!std::isfinite(out.loss)) throw ContractError("vae_loss: loss is non-finite");

  GenBackward gen = g.backward(z, upstream);
  out.grad_alpha = std::move(gen.grad_params);

  // Encoder gradients: the reparameterization path through z plus the KL term.
  Tensor dmu = gen.grad_z;
  Tensor dlogv = Tensor::matrix(B, d);
  for (std::size_t i = 0; i < B * d; ++i) {
    // dz/dlogv = (1/2) sqrt(v) eps
    dlogv[i] = gen.grad_z[i] * 0.5 * std::sqrt(v[i]) * eps[i] +
               gamma * 0.5 * (v[i] - 1.0) * inv_b;
    dmu[i] += gamma * enc.mu[i] * inv_b;
  }
  out.grad_beta = e.backward(samples, dmu, dlogv);
  return out;
}

LossReport train_iteration(EnergyModel& m, GeneratorModel& g, InferenceModel& e,
                           AdamState& opt_theta, AdamState& opt_alpha,
                           AdamState& opt_beta, const Tensor& data_batch,
                           const TrainConfig& cfg, std::size_t iter) {
  SamplerConfig scfg = cfg.sampler;
  scfg.seed = derive_seed(cfg.seed, iter, kIterSampler);

  AncestralChain ac = ancestral_langevin_sample(g, m, cfg.synth_batch, scfg);
  const Tensor& revised = ac.chain.final_x;

  LossReport report;
  report.energy_data = batch_mean_energy(m, data_batch);
  report.energy_initial = ac.chain.energy_trace.front();
  report.energy_revised = ac.chain.energy_trace.back();
  report.energy_gap = report.energy_initial - report.energy_revised;

  ParamStore gtheta = ebm_grad(m, data_batch, revised);
  if (cfg.weight_decay_theta > 0.0)
    add_scaled(gtheta, m.params(), cfg.weight_decay_theta);
  opt_theta.step(m.params(), gtheta, cfg.adam_theta);
  m.enforce_invariants();

  // The VAE sees only the revised samples; its gradients never touch theta.
  VaeLossResult vl = vae_loss(g, e, revised, cfg.gamma,
                              derive_seed(cfg.seed, iter, kIterVae));
  opt_alpha.step(g.params(), vl.grad_alpha, cfg.adam_alpha);
  g.enforce_invariants();
  opt_beta.step(e.params(), vl.grad_beta, cfg.adam_beta);
  e.enforce_invariants();

  report.recon = vl.recon;
  report.kl_prior = vl.kl;
  report.vae_loss = vl.loss;
  return report;
}

std::vector<std::size_t> minibatch_rows(std::size_t dataset_rows, std::size_t batch,
                                        std::uint64_t seed, std::size_t iter) {
  if (dataset_rows == 0 || batch == 0)
    throw ContractError("minibatch_rows: dataset and batch must be non-empty");
  std::vector<std::size_t> rows(batch);
  std::size_t pos = iter * batch;
  std::size_t epoch = pos / dataset_rows;
  std::size_t within = pos % dataset_rows;

  // Epoch permutations are regenerated on demand; a batch can straddle two.
  auto perm_for = [&](std::size_t ep) {
    std::vector<std::size_t> p(dataset_rows);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng r(derive_seed(seed, ep, kStreamShuffle));
    for (std::size_t i = dataset_rows; i > 1; --i)
      std::swap(p[i - 1], p[static_cast<std::size_t>(r.uniform() * i)]);
    return p;
  };

  std::vector<std::size_t> perm = perm_for(epoch);
  for (std::size_t i = 0; i < batch; ++i) {
    if (within == dataset_rows) {
      ++epoch;
      within = 0;
      perm = perm_for(epoch);
    }
    rows[i] = perm[within++];
  }
  return rows;
}

void train_loop(EnergyModel& m, GeneratorModel& g, InferenceModel& e,
                AdamState& opt_theta, AdamState& opt_alpha, AdamState& opt_beta,
                const Tensor& dataset, const TrainConfig& cfg, std::size_t start_iter,
                const TrainHooks& hooks) {
  if (dataset.rank() != 2 || dataset.rows() == 0)
    throw ContractError("train_loop: dataset must be a non-empty [N, D] tensor");
  if (dataset.cols() != m.dim())
    throw ContractError("train_loop: dataset dim does not match energy dim");
  if (cfg.data_batch > dataset.rows())
    throw ContractError("train_loop: batch larger than dataset");

  Tensor batch = Tensor::matrix(cfg.data_batch, dataset.cols());
  for (std::size_t iter = start_iter; iter < cfg.iterations; ++iter) {
    const std::vector<std::size_t> rows =
        minibatch_rows(dataset.rows(), cfg.data_batch, cfg.seed, iter);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(dataset.row_ptr(rows[i]), dataset.cols(), batch.row_ptr(i));

    LossReport report;
    try {
      report = train_iteration(m, g, e, opt_theta, opt_alpha, opt_beta, batch, cfg, iter);
    } catch (const DivergedChainError&) {
      if (hooks.on_checkpoint) hooks.on_checkpoint(iter);
      throw;
    }

    const std::size_t done = iter + 1;
    const bool last = done == cfg.iterations;
    if (hooks.on_eval && (last || (cfg.eval_every > 0 && done % cfg.eval_every == 0)))
      hooks.on_eval(done, report);
    if (hooks.on_checkpoint &&
        (last || (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)))
      hooks.on_checkpoint(done);
  }
}

}  // namespace ebmvae
