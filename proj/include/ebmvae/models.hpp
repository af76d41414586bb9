#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ebmvae/net.hpp"
#include "ebmvae/tensor.hpp"

namespace ebmvae {

// ---------------------------------------------------------------------------
// Model interfaces. Training, sampling, and diagnostics talk to these; there
// are MLP-backed implementations for real runs and closed-form linear-Gaussian
// ones for the analytic testbed.
// ---------------------------------------------------------------------------

class EnergyModel {
 public:
  virtual ~EnergyModel() = default;
  virtual std::size_t dim() const = 0;
  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;

  // xs: [B, dim] (or [dim] for a single point) -> [B] energies.
  virtual Tensor energy(const Tensor& xs) const = 0;
  // Energies plus dU/dx in one pass; gx has xs's batched shape [B, dim].
  virtual void energy_and_grad_x(const Tensor& xs, Tensor& energies, Tensor& gx) const = 0;
  // sum_b coeff[b] * dU(x_b)/dtheta.
  virtual ParamStore energy_grad_params(const Tensor& xs,
                                        const std::vector<double>& coeff) const = 0;
  // Projection hook run after each optimizer step (testbed keeps theta2 > 0).
  virtual void enforce_invariants() {}

  double energy_scalar(const Tensor& x) const;
  Tensor grad_x(const Tensor& xs) const;
};

struct GenBackward {
  ParamStore grad_params;
  Tensor grad_z;  // [B, latent_dim]
};

class GeneratorModel {
 public:
  virtual ~GeneratorModel() = default;
  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual double sigma() const = 0;
  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;

  // zs: [B, latent] -> mean outputs g(z): [B, data].
  virtual Tensor mean(const Tensor& zs) const = 0;
  // Vector-Jacobian products for upstream [B, data]: gradients w.r.t. the
  // generator parameters and w.r.t. z (the reparameterization path).
  virtual GenBackward backward(const Tensor& zs, const Tensor& upstream) const = 0;
  virtual void enforce_invariants() {}
};

// x = g(z) + sigma * noise. Pass noise = nullptr for the mean output.
Tensor generate(const GeneratorModel& g, const Tensor& zs, const Tensor* noise);

struct InferOut {
  Tensor mu;    // [B, latent]
  Tensor logv;  // [B, latent]; variance = exp(logv) is positive by construction
};

class InferenceModel {
 public:
  virtual ~InferenceModel() = default;
  virtual std::size_t data_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;

  virtual InferOut infer(const Tensor& xs) const = 0;
  // Gradient w.r.t. encoder params given upstreams on mu and logv.
  virtual ParamStore backward(const Tensor& xs, const Tensor& dmu,
                              const Tensor& dlogv) const = 0;
  virtual void enforce_invariants() {}
};

// log N(x; mean, sigma^2 I) for one example; x and mean are rank-1 of equal dim.
double log_gaussian_conditional(const Tensor& x, const Tensor& mean, double sigma);

// ---------------------------------------------------------------------------
// MLP-backed implementations.
// ---------------------------------------------------------------------------

class MlpEnergy : public EnergyModel {
 public:
  MlpEnergy(std::size_t dim, std::vector<std::size_t> hidden, std::uint64_t seed,
            Act hidden_act = Act::relu);
  std::size_t dim() const override { return net_.spec().in_dim; }
  ParamStore& params() override { return net_.params(); }
  const ParamStore& params() const override { return net_.params(); }
  Tensor energy(const Tensor& xs) const override;
  void energy_and_grad_x(const Tensor& xs, Tensor& energies, Tensor& gx) const override;
  ParamStore energy_grad_params(const Tensor& xs,
                                const std::vector<double>& coeff) const override;
  MlpNet& net() { return net_; }

 private:
  MlpNet net_;
};

class MlpGenerator : public GeneratorModel {
 public:
  MlpGenerator(std::size_t latent, std::size_t data, std::vector<std::size_t> hidden,
               double sigma, std::uint64_t seed, Act out_act = Act::tanh);
  std::size_t latent_dim() const override { return net_.spec().in_dim; }
  std::size_t data_dim() const override { return net_.spec().out_dim; }
  double sigma() const override { return sigma_; }
  ParamStore& params() override { return net_.params(); }
  const ParamStore& params() const override { return net_.params(); }
  Tensor mean(const Tensor& zs) const override;
  GenBackward backward(const Tensor& zs, const Tensor& upstream) const override;
  MlpNet& net() { return net_; }

 private:
  MlpNet net_;
  double sigma_;
};

class MlpEncoder : public InferenceModel {
 public:
  MlpEncoder(std::size_t data, std::size_t latent, std::vector<std::size_t> hidden,
             std::uint64_t seed);
  std::size_t data_dim() const override { return net_.spec().in_dim; }
  std::size_t latent_dim() const override { return latent_; }
  ParamStore& params() override { return net_.params(); }
  const ParamStore& params() const override { return net_.params(); }
  InferOut infer(const Tensor& xs) const override;
  ParamStore backward(const Tensor& xs, const Tensor& dmu,
                      const Tensor& dlogv) const override;
  MlpNet& net() { return net_; }

 private:
  MlpNet net_;
  std::size_t latent_;
};

// ---------------------------------------------------------------------------
// Linear-Gaussian testbed: 1-D data, 1-D latent, every density in closed form.
//   energy     U(x) = theta2 x^2 / 2 - theta1 x   =>  p = N(theta1/theta2, 1/theta2)
//   generator  x = a z + b + sigma eps            =>  marginal N(b, a^2 + sigma^2)
//   encoder    z | x ~ N(u x + c, w^2)
//   data       N(m_star, s_star^2)
// ---------------------------------------------------------------------------

struct Gaussian1D {
  double mean = 0.0;
  double var = 1.0;
};

// Gaussian with an x-affine mean and fixed variance: N(slope*x + offset, var).
struct AffineGaussian {
  double slope = 0.0;
  double offset = 0.0;
  double var = 1.0;
  Gaussian1D at(double x) const { return {slope * x + offset, var}; }
};

struct GaussianTestbed {
  double m_star = 0.0, s_star = 1.0;  // data
  double theta1 = 0.0, theta2 = 1.0;  // energy
  double a = 1.0, b = 0.0, sigma = 1.0;
  double u = 0.0, c = 0.0, w = 1.0;

  Gaussian1D data_density() const;
  Gaussian1D ebm_density() const;         // throws NonNormalizableError if theta2 <= 0
  Gaussian1D generator_marginal() const;  // sigma >= 0 allowed (noiseless limit)
  AffineGaussian posterior() const;       // true q(z|x)
  AffineGaussian encoder_density() const;

  // Analytic expected negative ELBO at x under the current encoder, with the
  // KL-to-prior term weighted by gamma. Equals nll(x) when gamma = 1 and the
  // encoder matches the posterior.
  double expected_neg_elbo(double x, double gamma) const;
  double nll(double x) const;  // -log of the generator marginal at x

  // The exact equilibrium triplet for data N(m_star, s_star^2): energy matches
  // the data density, generator marginal matches it too, encoder is the true
  // posterior. Requires sigma < s_star.
  static GaussianTestbed nash(double m_star, double s_star, double sigma);
};

struct TestbedDensities {
  Gaussian1D p_theta;
  Gaussian1D q_alpha;
  AffineGaussian posterior;
  Gaussian1D data;
};

TestbedDensities testbed_densities(const GaussianTestbed& t);

// One deterministic-affine step of the noisy Langevin kernel on the quadratic
// energy maps N(m, v) to N(rho m + (delta^2/2) theta1, rho^2 v + delta^2) with
// rho = 1 - (delta^2/2) theta2; composing `steps` of these is exact algebra.
// This is the oracle the sampled chains are tested against.
Gaussian1D langevin_compose(Gaussian1D start, double theta1, double theta2,
                            double delta, int steps, bool with_noise);

// Trainable views over the same parameterization.
class QuadraticEnergy : public EnergyModel {
 public:
  QuadraticEnergy(double theta1, double theta2);
  std::size_t dim() const override { return 1; }
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  Tensor energy(const Tensor& xs) const override;
  void energy_and_grad_x(const Tensor& xs, Tensor& energies, Tensor& gx) const override;
  ParamStore energy_grad_params(const Tensor& xs,
                                const std::vector<double>& coeff) const override;
  // Keeps the density normalizable when an update undershoots: theta2 >= 1e-3.
  void enforce_invariants() override;
  double theta1() const { return params_.at("theta1")[0]; }
  double theta2() const { return params_.at("theta2")[0]; }

 private:
  ParamStore params_;
};

class AffineGenerator : public GeneratorModel {
 public:
  AffineGenerator(double a, double b, double sigma);
  std::size_t latent_dim() const override { return 1; }
  std::size_t data_dim() const override { return 1; }
  double sigma() const override { return sigma_; }
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  Tensor mean(const Tensor& zs) const override;
  GenBackward backward(const Tensor& zs, const Tensor& upstream) const override;
  double a() const { return params_.at("a")[0]; }
  double b() const { return params_.at("b")[0]; }

 private:
  ParamStore params_;
  double sigma_;
};

class AffineEncoder : public InferenceModel {
 public:
  AffineEncoder(double u, double c, double w);
  std::size_t data_dim() const override { return 1; }
  std::size_t latent_dim() const override { return 1; }
  ParamStore& params() override { return params_; }
  const ParamStore& params() const override { return params_; }
  InferOut infer(const Tensor& xs) const override;
  ParamStore backward(const Tensor& xs, const Tensor& dmu,
                      const Tensor& dlogv) const override;
  double u() const { return params_.at("u")[0]; }
  double c() const { return params_.at("c")[0]; }
  double w() const;

 private:
  ParamStore params_;  // u, c, logv (logv = log w^2)
};

struct TestbedModels {
  std::unique_ptr<QuadraticEnergy> energy;
  std::unique_ptr<AffineGenerator> generator;
  std::unique_ptr<AffineEncoder> encoder;
};

TestbedModels make_testbed_models(const GaussianTestbed& t);

// Read the current parameter values back into a testbed record (for the
// closed-form diagnostics while the models train).
GaussianTestbed snapshot_testbed(const QuadraticEnergy& e, const AffineGenerator& g,
                                 const AffineEncoder& enc, double m_star, double s_star);

}  // namespace ebmvae
