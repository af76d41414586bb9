#pragma once

#include <cstdint>
#include <vector>

#include "ebmvae/models.hpp"
#include "ebmvae/training.hpp"

namespace ebmvae {

// Conditional variants: the networks take the condition as extra input
// columns, and thin row-aligned binding adapters expose the unconditional
// model interfaces so sampling/training code applies unchanged.
//   energy    U(x, y)   net input [x, y]
//   generator g(y, z)   net input [y, z]
//   encoder   q(z|x, y) net input [x, y]

// Rows of a and b concatenated: [A | B].
Tensor hconcat(const Tensor& a, const Tensor& b);

struct CondEnergyNet {
  CondEnergyNet(std::size_t x_dim, std::size_t y_dim, std::vector<std::size_t> hidden,
                std::uint64_t seed);
  std::size_t x_dim, y_dim;
  MlpNet net;  // [x_dim + y_dim] -> 1
};

struct CondGeneratorNet {
  CondGeneratorNet(std::size_t latent, std::size_t x_dim, std::size_t y_dim,
                   std::vector<std::size_t> hidden, double sigma, std::uint64_t seed,
                   Act out_act = Act::tanh);
  std::size_t latent, x_dim, y_dim;
  double sigma;
  MlpNet net;  // [y_dim + latent] -> x_dim
};

struct CondEncoderNet {
  CondEncoderNet(std::size_t latent, std::size_t x_dim, std::size_t y_dim,
                 std::vector<std::size_t> hidden, std::uint64_t seed);
  std::size_t latent, x_dim, y_dim;
  MlpNet net;  // [x_dim + y_dim] -> 2 * latent
};

// The adapters borrow the underlying net and the condition batch; batch row i
// is paired with ys row i. Neither is owned, so keep both alive while bound.

class BoundCondEnergy : public EnergyModel {
 public:
  BoundCondEnergy(CondEnergyNet& base, const Tensor& ys);
  std::size_t dim() const override { return base_->x_dim; }
  ParamStore& params() override { return base_->net.params(); }
  const ParamStore& params() const override { return base_->net.params(); }
  Tensor energy(const Tensor& xs) const override;
  void energy_and_grad_x(const Tensor& xs, Tensor& energies, Tensor& gx) const override;
  ParamStore energy_grad_params(const Tensor& xs,
                                const std::vector<double>& coeff) const override;

 private:
  Tensor joint(const Tensor& xs) const;
  CondEnergyNet* base_;
  const Tensor* ys_;
};

class BoundCondGenerator : public GeneratorModel {
 public:
  BoundCondGenerator(CondGeneratorNet& base, const Tensor& ys);
  std::size_t latent_dim() const override { return base_->latent; }
  std::size_t data_dim() const override { return base_->x_dim; }
  double sigma() const override { return base_->sigma; }
  ParamStore& params() override { return base_->net.params(); }
  const ParamStore& params() const override { return base_->net.params(); }
  Tensor mean(const Tensor& zs) const override;
  GenBackward backward(const Tensor& zs, const Tensor& upstream) const override;

 private:
  Tensor joint(const Tensor& zs) const;
  CondGeneratorNet* base_;
  const Tensor* ys_;
};

class BoundCondEncoder : public InferenceModel {
 public:
  BoundCondEncoder(CondEncoderNet& base, const Tensor& ys);
  std::size_t data_dim() const override { return base_->x_dim; }
  std::size_t latent_dim() const override { return base_->latent; }
  ParamStore& params() override { return base_->net.params(); }
  const ParamStore& params() const override { return base_->net.params(); }
  InferOut infer(const Tensor& xs) const override;
  ParamStore backward(const Tensor& xs, const Tensor& dmu,
                      const Tensor& dlogv) const override;

 private:
  CondEncoderNet* base_;
  const Tensor* ys_;
};

// Conditional joint update: binds the batch's conditions and runs the standard
// iteration, so it consumes the exact same derived RNG streams as the
// unconditional path. xs row i is the observed value for ys row i.
LossReport conditional_train_iteration(CondEnergyNet& m, CondGeneratorNet& g,
                                       CondEncoderNet& e, AdamState& opt_theta,
                                       AdamState& opt_alpha, AdamState& opt_beta,
                                       const Tensor& ys, const Tensor& xs,
                                       const TrainConfig& cfg, std::size_t iter);

// predict() for a condition batch: bind ys, pin latents at zero, refine
// noise-free. cfg.noise_enabled must be false.
Tensor conditional_predict(CondGeneratorNet& g, CondEnergyNet& m, const Tensor& ys,
                           const SamplerConfig& cfg);

// Stochastic conditional sampling: ancestral draw + noisy revision, given ys.
AncestralChain conditional_sample(CondGeneratorNet& g, CondEnergyNet& m,
                                  const Tensor& ys, const SamplerConfig& cfg);

}  // namespace ebmvae
