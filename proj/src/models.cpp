#include "ebmvae/models.hpp"

#include <cmath>
#include <cstring>

#include "ebmvae/errors.hpp"

namespace ebmvae {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_batch(const Tensor& xs, std::size_t dim, const char* what) {
  if (xs.rank() != 1 && xs.rank() != 2)
    throw ContractError(std::string(what) + ": input rank must be 1 or 2");
  if (xs.cols() != dim)
    throw ContractError(std::string(what) + ": expected " + std::to_string(dim) +
                        " features, got " + std::to_string(xs.cols()));
  if (!xs.all_finite())
    throw ContractError(std::string(what) + ": input contains non-finite values");
}

}  // namespace

double EnergyModel::energy_scalar(const Tensor& x) const {
  Tensor e = energy(x);
  return e[0];
}

Tensor EnergyModel::grad_x(const Tensor& xs) const {
  Tensor energies, gx;
  energy_and_grad_x(xs, energies, gx);
  return gx;
}

Tensor generate(const GeneratorModel& g, const Tensor& zs, const Tensor* noise) {
  Tensor x = g.mean(zs);
  if (noise != nullptr) {
    if (noise->numel() != x.numel())
      throw ContractError("generate: noise shape does not match output");
    if (!noise->all_finite())
      throw ContractError("generate: noise contains non-finite values");
    const double s = g.sigma();
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] += s * (*noise)[i];
  }
  return x;
}

double log_gaussian_conditional(const Tensor& x, const Tensor& mean, double sigma) {
  if (x.rank() != 1 || mean.rank() != 1 || x.numel() != mean.numel())
    throw ContractError("log_gaussian_conditional: x and mean must be rank-1, equal size");
  if (!(sigma > 0.0))
    throw ContractError("log_gaussian_conditional: sigma must be positive");
  const std::size_t d = x.numel();
  double ss = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = x[i] - mean[i];
    ss += r * r;
  }
  return -0.5 * static_cast<double>(d) * std::log(kTwoPi * sigma * sigma) -
         ss / (2.0 * sigma * sigma);
}

// --------------------------- MLP energy ------------------------------------

MlpEnergy::MlpEnergy(std::size_t dim, std::vector<std::size_t> hidden, std::uint64_t seed,
                     Act hidden_act)
    : net_(MlpSpec{dim, std::move(hidden), 1, hidden_act, Act::linear}, seed) {}

Tensor MlpEnergy::energy(const Tensor& xs) const {
  check_batch(xs, dim(), "energy");
  Trace t = net_.forward_traced(xs);
  const std::size_t B = t.output().rows();
  Tensor out({B}, 0.0);
  for (std::size_t b = 0; b < B; ++b) out[b] = t.output().at(b, 0);
  return out;
}

void MlpEnergy::energy_and_grad_x(const Tensor& xs, Tensor& energies, Tensor& gx) const {
  check_batch(xs, dim(), "energy");
  Trace t = net_.forward_traced(xs);
  const std::size_t B = t.output().rows();
  energies = Tensor({B}, 0.0);
  for (std::size_t b = 0; b < B; ++b) energies[b] = t.output().at(b, 0);
  Tensor ones(t.output().shape(), 1.0);
  gx = net_.grad_input(t, ones);
}

ParamStore MlpEnergy::energy_grad_params(const Tensor& xs,
                                         const std::vector<double>& coeff) const {
  check_batch(xs, dim(), "energy");
  if (coeff.size() != xs.rows())
    throw ContractError("energy_grad_params: coefficient count must match batch");
  Trace t = net_.forward_traced(xs);
  Tensor upstream(t.output().shape(), 0.0);
  for (std::size_t b = 0; b < coeff.size(); ++b) upstream.at(b, 0) = coeff[b];
  return net_.grad_params(t, upstream);
}

// --------------------------- MLP generator ---------------------------------

MlpGenerator::MlpGenerator(std::size_t latent, std::size_t data,
                           std::vector<std::size_t> hidden, double sigma,
                           std::uint64_t seed, Act out_act)
    : net_(MlpSpec{latent, std::move(hidden), data, Act::relu, out_act}, seed),
      sigma_(sigma) {
  if (!(sigma > 0.0)) throw ContractError("generator sigma must be positive");
}

Tensor MlpGenerator::mean(const Tensor& zs) const {
  check_batch(zs, latent_dim(), "generator");
  return net_.forward(zs);
}

GenBackward MlpGenerator::backward(const Tensor& zs, const Tensor& upstream) const {
  check_batch(zs, latent_dim(), "generator");
  Trace t = net_.forward_traced(zs);
  GenBackward out;
  out.grad_params = net_.grad_params(t, upstream);
  out.grad_z = net_.grad_input(t, upstream);
  return out;
}

// --------------------------- MLP encoder -----------------------------------

MlpEncoder::MlpEncoder(std::size_t data, std::size_t latent,
                       std::vector<std::size_t> hidden, std::uint64_t seed)
    : net_(MlpSpec{data, std::move(hidden), 2 * latent, Act::relu, Act::linear}, seed),
      latent_(latent) {}

InferOut MlpEncoder::infer(const Tensor& xs) const {
  check_batch(xs, data_dim(), "infer");
  Tensor raw = net_.forward(xs);
  const std::size_t B = raw.rows();
  InferOut out;
  out.mu = Tensor::matrix(B, latent_);
  out.logv = Tensor::matrix(B, latent_);
  for (std::size_t b = 0; b < B; ++b) {
    const double* r = raw.rank() == 1 ? raw.data() : raw.row_ptr(b);
    for (std::size_t j = 0; j < latent_; ++j) {
      out.mu.at(b, j) = r[j];
      out.logv.at(b, j) = r[latent_ + j];
    }
  }
  return out;
}

ParamStore MlpEncoder::backward(const Tensor& xs, const Tensor& dmu,
                                const Tensor& dlogv) const {
  check_batch(xs, data_dim(), "infer");
  Trace t = net_.forward_traced(xs);
  const std::size_t B = t.output().rows();
  if (dmu.numel() != B * latent_ || dlogv.numel() != B * latent_)
    throw ContractError("encoder backward: upstream shapes must be [B, latent]");
  Tensor upstream = Tensor::matrix(B, 2 * latent_);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < latent_; ++j) {
      upstream.at(b, j) = dmu[b * latent_ + j];
      upstream.at(b, latent_ + j) = dlogv[b * latent_ + j];
    }
  return net_.grad_params(t, upstream);
}

// --------------------------- testbed closed forms ---------------------------

Gaussian1D GaussianTestbed::data_density() const {
  if (!(s_star > 0.0)) throw ContractError("testbed: s_star must be positive");
  return {m_star, s_star * s_star};
}

Gaussian1D GaussianTestbed::ebm_density() const {
  if (!(theta2 > 0.0))
    throw NonNormalizableError("testbed energy is non-normalizable (theta2 <= 0)");
  return {theta1 / theta2, 1.0 / theta2};
}

Gaussian1D GaussianTestbed::generator_marginal() const {
  if (sigma < 0.0) throw ContractError("testbed: sigma must be nonnegative");
  return {b, a * a + sigma * sigma};
}

AffineGaussian GaussianTestbed::posterior() const {
  const double s2 = a * a + sigma * sigma;
  if (!(s2 > 0.0)) throw ContractError("testbed posterior undefined: a = sigma = 0");
  // q(z|x) = N(a (x - b) / s2, sigma^2 / s2); exact for the linear model.
  return {a / s2, -a * b / s2, sigma * sigma / s2};
}

AffineGaussian GaussianTestbed::encoder_density() const {
  if (!(w > 0.0)) throw ContractError("testbed: encoder w must be positive");
  return {u, c, w * w};
}

double GaussianTestbed::expected_neg_elbo(double x, double gamma) const {
  const double mu_e = u * x + c;
  const double v_e = w * w;
  // E_z[(x - a z - b)^2] under z ~ N(mu_e, v_e).
  const double resid = x - a * mu_e - b;
  const double erecon = (resid * resid + a * a * v_e) / (2.0 * sigma * sigma) +
                        0.5 * std::log(kTwoPi * sigma * sigma);
  const double kl = 0.5 * (v_e + mu_e * mu_e - 1.0 - std::log(v_e));
  return erecon + gamma * kl;
}

double GaussianTestbed::nll(double x) const {
  const Gaussian1D q = generator_marginal();
  const double r = x - q.mean;
  return 0.5 * std::log(kTwoPi * q.var) + r * r / (2.0 * q.var);
}

GaussianTestbed GaussianTestbed::nash(double m_star, double s_star, double sigma) {
  if (!(s_star > 0.0)) throw ContractError("nash: s_star must be positive");
  if (!(sigma > 0.0 && sigma < s_star))
    throw ContractError("nash: requires 0 < sigma < s_star");
  GaussianTestbed t;
  t.m_star = m_star;
  t.s_star = s_star;
  t.sigma = sigma;
  const double s2 = s_star * s_star;
  t.theta2 = 1.0 / s2;
  t.theta1 = m_star / s2;
  t.a = std::sqrt(s2 - sigma * sigma);
  t.b = m_star;
  const AffineGaussian post = t.posterior();
  t.u = post.slope;
  t.c = post.offset;
  t.w = std::sqrt(post.var);
  return t;
}

TestbedDensities testbed_densities(const GaussianTestbed& t) {
  return {t.ebm_density(), t.generator_marginal(), t.posterior(), t.data_density()};
}

Gaussian1D langevin_compose(Gaussian1D start, double theta1, double theta2,
                            double delta, int steps, bool with_noise) {
  if (steps < 0) throw ContractError("langevin_compose: steps must be >= 0");
  const double half = 0.5 * delta * delta;
  const double rho = 1.0 - half * theta2;
  Gaussian1D g = start;
  for (int i = 0; i < steps; ++i) {
    g.mean = rho * g.mean + half * theta1;
    g.var = rho * rho * g.var + (with_noise ? delta * delta : 0.0);
  }
  return g;
}

// --------------------------- trainable testbed views ------------------------

QuadraticEnergy::QuadraticEnergy(double t1, double t2) {
  if (!(t2 > 0.0))
    throw NonNormalizableError("QuadraticEnergy: theta2 must be positive");
  params_.add("theta1", Tensor{t1});
  params_.add("theta2", Tensor{t2});
}

Tensor QuadraticEnergy::energy(const Tensor& xs) const {
  check_batch(xs, 1, "energy");
  const double t1 = theta1(), t2 = theta2();
  Tensor out({xs.rows()}, 0.0);
  for (std::size_t b = 0; b < xs.rows(); ++b) {
    const double x = xs[b];
    out[b] = 0.5 * t2 * x * x - t1 * x;
  }
  return out;
}

void QuadraticEnergy::energy_and_grad_x(const Tensor& xs, Tensor& energies,
                                        Tensor& gx) const {
  check_batch(xs, 1, "energy");
  const double t1 = theta1(), t2 = theta2();
  const std::size_t B = xs.rows();
  energies = Tensor({B}, 0.0);
  gx = xs.rank() == 1 ? Tensor({1}, 0.0) : Tensor::matrix(B, 1);
  for (std::size_t b = 0; b < B; ++b) {
    const double x = xs[b];
    energies[b] = 0.5 * t2 * x * x - t1 * x;
    gx[b] = t2 * x - t1;
  }
}

ParamStore QuadraticEnergy::energy_grad_params(const Tensor& xs,
                                               const std::vector<double>& coeff) const {
  check_batch(xs, 1, "energy");
  if (coeff.size() != xs.rows())
    throw ContractError("energy_grad_params: coefficient count must match batch");
  double g1 = 0, g2 = 0;
  for (std::size_t b = 0; b < xs.rows(); ++b) {
    const double x = xs[b];
    g1 += coeff[b] * (-x);           // dU/dtheta1 = -x
    g2 += coeff[b] * (0.5 * x * x);  // dU/dtheta2 = x^2/2
  }
  ParamStore out;
  out.add("theta1", Tensor{g1});
  out.add("theta2", Tensor{g2});
  return out;
}

void QuadraticEnergy::enforce_invariants() {
  double& t2 = params_.at("theta2")[0];
  if (t2 < 1e-3) t2 = 1e-3;
}

AffineGenerator::AffineGenerator(double a, double b, double sigma) : sigma_(sigma) {
  // sigma = 0 is the noiseless limit (x = a z + b exactly); training with it
  // is rejected later by vae_loss, which needs a positive conditional variance.
  if (!(sigma >= 0.0)) throw ContractError("AffineGenerator: sigma must be nonnegative");
  params_.add("a", Tensor{a});
  params_.add("b", Tensor{b});
}

Tensor AffineGenerator::mean(const Tensor& zs) const {
  check_batch(zs, 1, "generator");
  const double av = a(), bv = b();
  Tensor out = zs.rank() == 1 ? Tensor({1}, 0.0) : Tensor::matrix(zs.rows(), 1);
  for (std::size_t i = 0; i < zs.rows(); ++i) out[i] = av * zs[i] + bv;
  return out;
}

GenBackward AffineGenerator::backward(const Tensor& zs, const Tensor& upstream) const {
  check_batch(zs, 1, "generator");
  if (upstream.numel() != zs.rows())
    throw ContractError("generator backward: upstream size mismatch");
  const double av = a();
  double ga = 0, gb = 0;
  GenBackward out;
  out.grad_z = Tensor(zs.shape(), 0.0);
  for (std::size_t i = 0; i < zs.rows(); ++i) {
    ga += upstream[i] * zs[i];
    gb += upstream[i];
    out.grad_z[i] = upstream[i] * av;
  }
  out.grad_params.add("a", Tensor{ga});
  out.grad_params.add("b", Tensor{gb});
  return out;
}

AffineEncoder::AffineEncoder(double u, double c, double w) {
  if (!(w > 0.0)) throw ContractError("AffineEncoder: w must be positive");
  params_.add("u", Tensor{u});
  params_.add("c", Tensor{c});
  params_.add("logv", Tensor{2.0 * std::log(w)});
}

double AffineEncoder::w() const { return std::exp(0.5 * params_.at("logv")[0]); }

InferOut AffineEncoder::infer(const Tensor& xs) const {
  check_batch(xs, 1, "infer");
  const double uv = u(), cv = c(), lv = params_.at("logv")[0];
  const std::size_t B = xs.rows();
  InferOut out;
  out.mu = Tensor::matrix(B, 1);
  out.logv = Tensor::matrix(B, 1);
  for (std::size_t i = 0; i < B; ++i) {
    out.mu[i] = uv * xs[i] + cv;
    out.logv[i] = lv;
  }
  return out;
}

ParamStore AffineEncoder::backward(const Tensor& xs, const Tensor& dmu,
                                   const Tensor& dlogv) const {
  check_batch(xs, 1, "infer");
  const std::size_t B = xs.rows();
  if (dmu.numel() != B || dlogv.numel() != B)
    throw ContractError("encoder backward: upstream shapes must be [B, 1]");
  double gu = 0, gc = 0, gl = 0;
  for (std::size_t i = 0; i < B; ++i) {
    gu += dmu[i] * xs[i];
    gc += dmu[i];
    gl += dlogv[i];
  }
  ParamStore out;
  out.add("u", Tensor{gu});
  out.add("c", Tensor{gc});
  out.add("logv", Tensor{gl});
  return out;
}

TestbedModels make_testbed_models(const GaussianTestbed& t) {
  TestbedModels m;
  m.energy = std::make_unique<QuadraticEnergy>(t.theta1, t.theta2);
  m.generator = std::make_unique<AffineGenerator>(t.a, t.b, t.sigma);
  m.encoder = std::make_unique<AffineEncoder>(t.u, t.c, t.w);
  return m;
}

GaussianTestbed snapshot_testbed(const QuadraticEnergy& e, const AffineGenerator& g,
                                 const AffineEncoder& enc, double m_star, double s_star) {
  GaussianTestbed t;
  t.m_star = m_star;
  t.s_star = s_star;
  t.theta1 = e.theta1();
  t.theta2 = e.theta2();
  t.a = g.a();
  t.b = g.b();
  t.sigma = g.sigma();
  t.u = enc.u();
  t.c = enc.c();
  t.w = enc.w();
  return t;
}

}  // namespace ebmvae
