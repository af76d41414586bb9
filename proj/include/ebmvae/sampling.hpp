#pragma once

#include <cstdint>
#include <vector>

#include "ebmvae/models.hpp"
#include "ebmvae/tensor.hpp"

namespace ebmvae {

struct SamplerConfig {
  int steps = 15;
  double step_size = 0.002;  // delta: drift delta^2/2, noise std delta
  bool noise_enabled = true;
  bool record_frames = false;
  bool clamp_enabled = false;
  double clamp_lo = -1.0;
  double clamp_hi = 1.0;
  std::uint64_t seed = 0;
};

// One batch of chains. frames is filled only when record_frames is set and
// then holds steps+1 entries with frames[0] == initial and frames.back() ==
// final_x. energy_trace always holds steps+1 mean batch energies, one per
// frame index.
struct ChainRecord {
  Tensor initial;
  Tensor final_x;
  std::vector<Tensor> frames;
  std::vector<double> energy_trace;
};

struct AncestralDraw {
  Tensor z;  // [B, latent]
  Tensor x;  // [B, data] = g(z) + sigma * eps
};

// z ~ N(0, I), x = g(z) + sigma * eps. Both draws use per-chain derived RNG
// streams, so results do not depend on batch evaluation order.
AncestralDraw ancestral_sample(const GeneratorModel& g, std::size_t batch,
                               std::uint64_t seed);

// One transition x - (delta^2/2) dU/dx + delta * noise. noise == nullptr means
// the deterministic half-step (gradient descent on U). Throws
// DivergedChainError (step index 0) if the update leaves finite range.
Tensor langevin_step(const EnergyModel& m, const Tensor& x, double delta,
                     const Tensor* noise);

// cfg.steps transitions from x0. Noise comes from per-chain streams derived
// from cfg.seed. Divergence at step k (0-based) aborts with that index.
ChainRecord langevin_chain(const EnergyModel& m, const Tensor& x0,
                           const SamplerConfig& cfg);

struct AncestralChain {
  Tensor z;           // the initializing latents
  ChainRecord chain;  // chain.initial is the ancestral draw, final_x the revision
};

// Ancestral draw followed by the Langevin revision; the two stages consume
// distinct derived streams of cfg.seed.
AncestralChain ancestral_langevin_sample(const GeneratorModel& g, const EnergyModel& m,
                                         std::size_t batch, const SamplerConfig& cfg);

// mu + sqrt(v) * eps with eps ~ N(0, I) drawn from per-row streams of seed.
// v must be strictly positive everywhere.
Tensor reparameterized_draw(const Tensor& mu, const Tensor& v, std::uint64_t seed);
// Same, with the caller supplying eps (training keeps eps for the backward pass).
Tensor reparameterized_from_eps(const Tensor& mu, const Tensor& v, const Tensor& eps);

// Deterministic prediction: latents pinned at the prior mean (zero), then a
// noise-free refinement chain. The models are typically condition-bound
// wrappers (see conditional.hpp). Requires cfg.noise_enabled == false.
Tensor predict(const GeneratorModel& g, const EnergyModel& m, std::size_t batch,
               const SamplerConfig& cfg);

}  // namespace ebmvae
