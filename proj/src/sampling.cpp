#include "ebmvae/sampling.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "ebmvae/errors.hpp"
#include "ebmvae/rng.hpp"

namespace ebmvae {

namespace {

// Purpose tags for derived RNG streams.
constexpr std::uint64_t kStreamAncestralZ = 101;
constexpr std::uint64_t kStreamAncestralEps = 102;
constexpr std::uint64_t kStreamLangevin = 103;
constexpr std::uint64_t kStreamReparam = 104;

void check_sampler_config(const SamplerConfig& cfg) {
  if (cfg.steps < 0) throw ContractError("sampler: steps must be >= 0");
  if (!(cfg.step_size > 0.0)) throw ContractError("sampler: step_size must be positive");
  if (cfg.clamp_enabled && !(cfg.clamp_lo < cfg.clamp_hi))
    throw ContractError("sampler: clamp range must satisfy lo < hi");
}

double mean_of(const Tensor& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
  return t.numel() ? s / static_cast<double>(t.numel()) : 0.0;
}

void apply_clamp(const SamplerConfig& cfg, Tensor& x) {
  if (!cfg.clamp_enabled) return;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (x[i] < cfg.clamp_lo) x[i] = cfg.clamp_lo;
    if (x[i] > cfg.clamp_hi) x[i] = cfg.clamp_hi;
  }
}

}  // namespace

AncestralDraw ancestral_sample(const GeneratorModel& g, std::size_t batch,
                               std::uint64_t seed) {
  if (batch == 0) throw ContractError("ancestral_sample: batch must be positive");
  const std::size_t d = g.latent_dim(), D = g.data_dim();
  AncestralDraw out;
  out.z = Tensor::matrix(batch, d);
  Tensor eps = Tensor::matrix(batch, D);
  for (std::size_t i = 0; i < batch; ++i) {
    Rng zr(derive_seed(seed, i, kStreamAncestralZ));
    zr.fill_normal(out.z.row_ptr(i), d);
    Rng er(derive_seed(seed, i, kStreamAncestralEps));
    er.fill_normal(eps.row_ptr(i), D);
  }
  out.x = generate(g, out.z, &eps);
  return out;
}

namespace {

// Shared transition: x <- x - (delta^2/2) dU/dx + delta * noise. step_index is
// only for divergence reporting.
Tensor transition(const EnergyModel& m, const Tensor& x, double delta,
                  const Tensor* noise, std::size_t step_index) {
  Tensor energies, grad;
  m.energy_and_grad_x(x, energies, grad);
  if (!grad.all_finite())
    throw DivergedChainError(step_index, "langevin: non-finite energy gradient at step " +
                                             std::to_string(step_index));
  const double half = 0.5 * delta * delta;
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= half * grad[i];
  if (noise != nullptr) {
    if (noise->numel() != x.numel())
      throw ContractError("langevin: noise shape does not match state");
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += delta * (*noise)[i];
  }
  if (!out.all_finite())
    throw DivergedChainError(step_index, "langevin: chain diverged at step " +
                                             std::to_string(step_index));
  return out;
}

}  // namespace

Tensor langevin_step(const EnergyModel& m, const Tensor& x, double delta,
                     const Tensor* noise) {
  if (!(delta > 0.0)) throw ContractError("langevin_step: delta must be positive");
  if (!x.all_finite()) throw ContractError("langevin_step: state contains non-finite values");
  if (noise && !noise->all_finite())
    throw ContractError("langevin_step: noise contains non-finite values");
  return transition(m, x, delta, noise, 0);
}

ChainRecord langevin_chain(const EnergyModel& m, const Tensor& x0,
                           const SamplerConfig& cfg) {
  check_sampler_config(cfg);
  if (!x0.all_finite()) throw ContractError("langevin_chain: x0 contains non-finite values");
  if (x0.cols() != m.dim())
    throw ContractError("langevin_chain: state dim does not match energy dim");

  const std::size_t B = x0.rows(), D = m.dim();
  ChainRecord rec;
  rec.initial = x0;
  rec.energy_trace.reserve(cfg.steps + 1);
  if (cfg.record_frames) rec.frames.push_back(x0);

  // Per-chain noise streams: chain i draws its own N(0,1) sequence, so the
  // realized path is independent of batch layout.
  std::vector<Rng> noise_rngs;
  if (cfg.noise_enabled) {
    noise_rngs.reserve(B);
    for (std::size_t i = 0; i < B; ++i)
      noise_rngs.emplace_back(derive_seed(cfg.seed, i, kStreamLangevin));
  }

  Tensor x = x0;
  Tensor noise = Tensor(x0.shape(), 0.0);
  for (int step = 0; step < cfg.steps; ++step) {
    rec.energy_trace.push_back(mean_of(m.energy(x)));
    const Tensor* noise_ptr = nullptr;
    if (cfg.noise_enabled) {
      for (std::size_t i = 0; i < B; ++i)
        noise_rngs[i].fill_normal(noise.data() + i * D, D);
      noise_ptr = &noise;
    }
    x = transition(m, x, cfg.step_size, noise_ptr, static_cast<std::size_t>(step));
    apply_clamp(cfg, x);
    if (cfg.record_frames) rec.frames.push_back(x);
  }
  rec.energy_trace.push_back(mean_of(m.energy(x)));
  rec.final_x = std::move(x);
  return rec;
}

AncestralChain ancestral_langevin_sample(const GeneratorModel& g, const EnergyModel& m,
                                         std::size_t batch, const SamplerConfig& cfg) {
  if (g.data_dim() != m.dim())
    throw ContractError("ancestral_langevin_sample: generator and energy dims differ");
  AncestralDraw draw = ancestral_sample(g, batch, cfg.seed);
  AncestralChain out;
  out.z = std::move(draw.z);
  out.chain = langevin_chain(m, draw.x, cfg);
  return out;
}

Tensor reparameterized_from_eps(const Tensor& mu, const Tensor& v, const Tensor& eps) {
  if (!mu.same_shape(v) || !mu.same_shape(eps))
    throw ContractError("reparameterized draw: mu, v, eps shapes must match");
  Tensor z = mu;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    if (!(v[i] > 0.0))
      throw ContractError("reparameterized draw: variance must be strictly positive");
    z[i] += std::sqrt(v[i]) * eps[i];
  }
  return z;
}

Tensor reparameterized_draw(const Tensor& mu, const Tensor& v, std::uint64_t seed) {
  Tensor eps(mu.shape(), 0.0);
  const std::size_t B = mu.rows(), d = mu.cols();
  for (std::size_t i = 0; i < B; ++i) {
    Rng r(derive_seed(seed, i, kStreamReparam));
    r.fill_normal(eps.data() + i * d, d);
  }
  return reparameterized_from_eps(mu, v, eps);
}

Tensor predict(const GeneratorModel& g, const EnergyModel& m, std::size_t batch,
               const SamplerConfig& cfg) {
  if (cfg.noise_enabled)
    throw UsageError("predict: refinement must run noise-free (cfg.noise_enabled)");
  check_sampler_config(cfg);
  // Latent pinned at the prior mean.
  Tensor z0 = Tensor::matrix(batch, g.latent_dim(), 0.0);
  Tensor x0 = g.mean(z0);
  ChainRecord rec = langevin_chain(m, x0, cfg);
  return rec.final_x;
}

}  // namespace ebmvae
