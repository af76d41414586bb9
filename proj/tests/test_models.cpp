#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ebmvae/errors.hpp"
#include "ebmvae/models.hpp"
#include "ebmvae/rng.hpp"

#include "oracles.hpp"
#include "util.hpp"

using namespace ebmvae;

namespace {

GaussianTestbed random_testbed(Rng& r) {
  GaussianTestbed t;
  t.m_star = r.uniform(-1.0, 1.0);
  t.s_star = r.uniform(0.5, 2.0);
  t.theta1 = r.uniform(-1.0, 1.0);
  t.theta2 = r.uniform(0.3, 3.0);
  t.a = r.uniform(-2.0, 2.0);
  t.b = r.uniform(-1.0, 1.0);
  t.sigma = r.uniform(0.2, 1.5);
  t.u = r.uniform(-1.0, 1.0);
  t.c = r.uniform(-0.5, 0.5);
  t.w = r.uniform(0.2, 1.5);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Energy models
// ---------------------------------------------------------------------------

TEST_CASE("quadratic energy with theta = (0, 1) gives U(2) = 2") {
  QuadraticEnergy m(0.0, 1.0);
  CHECK(m.energy_scalar(Tensor{2.0}) == 2.0);
  CHECK(m.energy_scalar(Tensor{-3.0}) == 4.5);
}

TEST_CASE("zero-weight mlp energy is zero everywhere") {
  MlpEnergy m(2, {8, 8}, 4);
  m.params().unflatten(std::vector<double>(m.params().total_size(), 0.0));
  Rng r(1);
  for (int i = 0; i < 10; ++i)
    CHECK(m.energy_scalar(Tensor{r.uniform(-2.0, 2.0), r.uniform(-2.0, 2.0)}) == 0.0);
}

TEST_CASE("mlp energy matches the independent forward oracle") {
  MlpEnergy m(2, {16}, 42);
  const auto layers = testutil::naive_layers(const_cast<MlpEnergy&>(m).net());
  Rng r(2);
  for (int i = 0; i < 20; ++i) {
    const double x0 = r.uniform(-1.0, 1.0), x1 = r.uniform(-1.0, 1.0);
    const std::vector<double> want = oracle::naive_forward(layers, {x0, x1});
    CHECK(oracle::rel_err(m.energy_scalar(Tensor{x0, x1}), want[0]) < 1e-13);
  }
}

TEST_CASE("energy_and_grad_x agrees with grad_x and finite differences") {
  MlpEnergy m(2, {6}, 7, Act::tanh);
  Tensor xs = Tensor::matrix(3, 2);
  Rng r(3);
  for (std::size_t i = 0; i < xs.numel(); ++i) xs[i] = r.uniform(-1.0, 1.0);
  Tensor energies, gx;
  m.energy_and_grad_x(xs, energies, gx);
  REQUIRE(energies.numel() == 3);
  CHECK(bitwise_equal(gx, m.grad_x(xs)));
  const Tensor us = m.energy(xs);
  CHECK(bitwise_equal(energies, us));
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t j = 0; j < 2; ++j) {
      Tensor xv = xs.row_copy(b);
      const double fd = oracle::central_diff(
          [&](double v) {
            xv[j] = v;
            return m.energy_scalar(xv);
          },
          xs.at(b, j), 1e-5);
      CHECK(oracle::rel_err(gx.at(b, j), fd) < 1e-4);
    }
  }
}

TEST_CASE("energy_grad_params applies per-row coefficients") {
  MlpEnergy m(1, {5}, 9);
  Tensor xs = Tensor::matrix(2, 1);
  xs.at(0, 0) = 0.3;
  xs.at(1, 0) = -0.9;
  const ParamStore g = m.energy_grad_params(xs, {0.25, -1.5});

  // independently: coeff-weighted sum of single-row parameter gradients
  auto single = [&](std::size_t row) {
    const Trace t = m.net().forward_traced(xs.row_copy(row));
    return m.net().grad_params(t, Tensor{1.0});
  };
  const ParamStore g0 = single(0);
  const ParamStore g1 = single(1);
  for (const std::string& name : g.names()) {
    const Tensor& got = g.at(name);
    for (std::size_t i = 0; i < got.numel(); ++i) {
      const double want = 0.25 * g0.at(name)[i] + -1.5 * g1.at(name)[i];
      CHECK(oracle::rel_err(got[i], want) < 1e-12);
    }
  }
}

TEST_CASE("quadratic energy gradients and invariant floor") {
  QuadraticEnergy m(0.5, 2.0);
  Tensor xs = Tensor::matrix(2, 1);
  xs.at(0, 0) = 1.0;
  xs.at(1, 0) = -2.0;
  Tensor e, gx;
  m.energy_and_grad_x(xs, e, gx);
  CHECK(e[0] == doctest::Approx(2.0 * 0.5 - 0.5).epsilon(1e-12));  // theta2 x^2/2 - theta1 x
  CHECK(gx.at(0, 0) == doctest::Approx(2.0 * 1.0 - 0.5));          // theta2 x - theta1
  CHECK(gx.at(1, 0) == doctest::Approx(2.0 * -2.0 - 0.5));

  const ParamStore g = m.energy_grad_params(xs, {1.0, 1.0});
  CHECK(g.at("theta1")[0] == doctest::Approx(-(1.0 + -2.0)));       // -sum x
  CHECK(g.at("theta2")[0] == doctest::Approx((1.0 + 4.0) / 2.0));   // sum x^2/2

  m.params().at("theta2")[0] = -5.0;
  m.enforce_invariants();
  CHECK(m.theta2() == 1e-3);
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

TEST_CASE("affine generate: a=1,b=0 passes z through; a=2,b=1,noise=1 gives 3.5") {
  AffineGenerator id(1.0, 0.0, 0.3);
  Tensor z{1.0};
  Tensor noise0{0.0};
  CHECK(generate(id, z, &noise0)[0] == 1.0);

  AffineGenerator g(2.0, 1.0, 0.5);
  Tensor noise1{1.0};
  CHECK(generate(g, z, &noise1)[0] == 3.5);
  CHECK(generate(g, z, nullptr)[0] == 3.0);  // mean output
}

TEST_CASE("mlp generator mean matches the naive oracle with a tanh head") {
  MlpGenerator g(2, 3, {8}, 0.3, 123);
  const auto layers = testutil::naive_layers(g.net());
  const Tensor z{0.4, -0.9};
  const Tensor x = g.mean(z);
  const std::vector<double> want = oracle::naive_forward(layers, {0.4, -0.9});
  for (std::size_t j = 0; j < 3; ++j) CHECK(oracle::rel_err(x[j], want[j]) < 1e-13);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(x[j]) <= 1.0);  // tanh range
}

TEST_CASE("generate with noise averages to the mean output") {
  AffineGenerator g(1.5, -0.2, 0.7);
  const Tensor z{0.6};
  const double mean = generate(g, z, nullptr)[0];
  const std::size_t n = 10000;
  Rng r(9);
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor noise{r.normal()};
    xs[i] = generate(g, z, &noise)[0];
  }
  CHECK(std::fabs(oracle::mean_of(xs) - mean) < 3.0 * oracle::se_mean(0.49, n));
  CHECK(std::fabs(oracle::var_of(xs) - 0.49) < 3.0 * oracle::se_var(0.49, n));
}

TEST_CASE("generator sigma contracts: mlp rejects nonpositive, affine allows zero") {
  CHECK_THROWS_AS(MlpGenerator(1, 1, {4}, 0.0, 1), ContractError);
  CHECK_THROWS_AS(AffineGenerator(1.0, 0.0, -0.1), ContractError);
  AffineGenerator noiseless(1.0, 0.0, 0.0);  // the noiseless limit is legal
  CHECK(noiseless.sigma() == 0.0);
}

TEST_CASE("affine generator backward implements the exact affine rules") {
  AffineGenerator g(1.7, 0.4, 0.3);
  Tensor zs = Tensor::matrix(2, 1);
  zs.at(0, 0) = 0.5;
  zs.at(1, 0) = -1.25;
  Tensor up = Tensor::matrix(2, 1);
  up.at(0, 0) = 2.0;
  up.at(1, 0) = -0.5;
  const GenBackward bk = g.backward(zs, up);
  CHECK(bk.grad_params.at("a")[0] == doctest::Approx(2.0 * 0.5 + -0.5 * -1.25));
  CHECK(bk.grad_params.at("b")[0] == doctest::Approx(2.0 + -0.5));
  CHECK(bk.grad_z.at(0, 0) == doctest::Approx(1.7 * 2.0));
  CHECK(bk.grad_z.at(1, 0) == doctest::Approx(1.7 * -0.5));
}

TEST_CASE("mlp generator backward matches finite differences") {
  MlpGenerator g(2, 2, {6}, 0.3, 55, Act::linear);
  Tensor zs = Tensor::matrix(1, 2);
  zs.at(0, 0) = 0.3;
  zs.at(0, 1) = -0.6;
  Tensor up = Tensor::matrix(1, 2);
  up.at(0, 0) = 1.3;
  up.at(0, 1) = -0.7;
  const GenBackward bk = g.backward(zs, up);

  auto loss = [&](const Tensor& z) {
    const Tensor x = g.mean(z);
    return up[0] * x[0] + up[1] * x[1];
  };
  const double h = 1e-5;
  for (const std::string& name : g.params().names()) {
    Tensor& p = g.params().at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double hi = loss(zs);
      p[i] = keep - h;
      const double lo = loss(zs);
      p[i] = keep;
      CHECK(oracle::rel_err(bk.grad_params.at(name)[i], (hi - lo) / (2.0 * h)) < 1e-4);
    }
  }
  for (std::size_t j = 0; j < 2; ++j) {
    Tensor zv = zs;
    const double fd = oracle::central_diff(
        [&](double v) {
          zv[j] = v;
          return loss(zv);
        },
        zs[j], h);
    CHECK(oracle::rel_err(bk.grad_z[j], fd) < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

TEST_CASE("zero-weight encoder infers mu = 0, v = 1") {
  MlpEncoder e(2, 3, {4}, 8);
  e.params().unflatten(std::vector<double>(e.params().total_size(), 0.0));
  const InferOut out = e.infer(Tensor{0.7, -0.3});
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(out.mu[j] == 0.0);
    CHECK(std::exp(out.logv[j]) == 1.0);
  }
}

TEST_CASE("affine encoder (u=0.5, c=0, w=0.2) at x=2 gives mu=1, v=0.04") {
  AffineEncoder e(0.5, 0.0, 0.2);
  const InferOut out = e.infer(Tensor{2.0});
  CHECK(out.mu[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::exp(out.logv[0]) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(e.w() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(AffineEncoder(0.5, 0.0, 0.0), ContractError);
}

TEST_CASE("encoder variance stays finite and positive over ten thousand inputs") {
  MlpEncoder e(2, 2, {16}, 321);
  Rng r(4);
  Tensor xs = Tensor::matrix(10000, 2);
  for (std::size_t i = 0; i < xs.numel(); ++i) xs[i] = r.uniform(-3.0, 3.0);
  const InferOut out = e.infer(xs);
  REQUIRE(out.mu.rows() == 10000);
  bool ok = true;
  for (std::size_t i = 0; i < out.logv.numel(); ++i) {
    const double v = std::exp(out.logv[i]);
    ok = ok && std::isfinite(v) && v > 0.0;
  }
  CHECK(ok);
}

TEST_CASE("encoder backward matches finite differences through mu and logv") {
  MlpEncoder e(2, 2, {5}, 77);
  const Tensor x{0.4, 0.1};
  Tensor dmu = Tensor::matrix(1, 2);
  dmu.at(0, 0) = 0.8;
  dmu.at(0, 1) = -0.3;
  Tensor dlogv = Tensor::matrix(1, 2);
  dlogv.at(0, 0) = 0.5;
  dlogv.at(0, 1) = 1.1;
  Tensor xb = Tensor::matrix(1, 2);
  xb.at(0, 0) = x[0];
  xb.at(0, 1) = x[1];
  const ParamStore g = e.backward(xb, dmu, dlogv);

  auto loss = [&]() {
    const InferOut out = e.infer(x);
    return dmu[0] * out.mu[0] + dmu[1] * out.mu[1] + dlogv[0] * out.logv[0] +
           dlogv[1] * out.logv[1];
  };
  const double h = 1e-5;
  for (const std::string& name : e.params().names()) {
    Tensor& p = e.params().at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double hi = loss();
      p[i] = keep - h;
      const double lo = loss();
      p[i] = keep;
      CHECK(oracle::rel_err(g.at(name)[i], (hi - lo) / (2.0 * h)) < 1e-4);
    }
  }
}

// ---------------------------------------------------------------------------
// Gaussian conditional density
// ---------------------------------------------------------------------------

TEST_CASE("log_gaussian_conditional hits the textbook values") {
  const double half_log_2pi = 0.5 * std::log(2.0 * 3.14159265358979323846);
  CHECK(log_gaussian_conditional(Tensor{0.7}, Tensor{0.7}, 1.0) ==
        doctest::Approx(-half_log_2pi).epsilon(1e-12));
  CHECK(log_gaussian_conditional(Tensor{1.7}, Tensor{0.7}, 1.0) ==
        doctest::Approx(-half_log_2pi - 0.5).epsilon(1e-12));
}

TEST_CASE("log_gaussian_conditional matches an independent normal density") {
  Rng r(6);
  for (int i = 0; i < 50; ++i) {
    const double x0 = r.uniform(-2.0, 2.0), x1 = r.uniform(-2.0, 2.0);
    const double m0 = r.uniform(-2.0, 2.0), m1 = r.uniform(-2.0, 2.0);
    const double sigma = r.uniform(0.2, 2.0);
    const double got = log_gaussian_conditional(Tensor{x0, x1}, Tensor{m0, m1}, sigma);
    const double want = std::log(oracle::normal_pdf(x0, m0, sigma * sigma)) +
                        std::log(oracle::normal_pdf(x1, m1, sigma * sigma));
    CHECK(oracle::rel_err(got, want) < 1e-10);
  }
  CHECK_THROWS_AS(log_gaussian_conditional(Tensor{1.0}, Tensor{0.0}, 0.0), ContractError);
}

// ---------------------------------------------------------------------------
// Testbed closed forms
// ---------------------------------------------------------------------------

TEST_CASE("testbed_densities: theta=(0,1) is standard normal; theta2<=0 rejected") {
  GaussianTestbed t;
  t.theta1 = 0.0;
  t.theta2 = 1.0;
  const TestbedDensities d = testbed_densities(t);
  CHECK(d.p_theta.mean == 0.0);
  CHECK(d.p_theta.var == 1.0);

  t.theta2 = 0.0;
  CHECK_THROWS_AS(testbed_densities(t), NonNormalizableError);
  t.theta2 = -1.0;
  CHECK_THROWS_AS(t.ebm_density(), NonNormalizableError);
}

TEST_CASE("testbed marginal and posterior: a=2, b=1, sigma=1") {
  GaussianTestbed t;
  t.a = 2.0;
  t.b = 1.0;
  t.sigma = 1.0;
  const TestbedDensities d = testbed_densities(t);
  CHECK(d.q_alpha.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.q_alpha.var == doctest::Approx(5.0).epsilon(1e-12));
  const Gaussian1D post = d.posterior.at(3.0);
  CHECK(post.mean == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(post.var == doctest::Approx(0.2).epsilon(1e-12));

  const oracle::PosteriorMoments ref = oracle::bayes_posterior_quadrature(2.0, 1.0, 1.0, 3.0);
  CHECK(std::fabs(post.mean - ref.mean) < 1e-6);
  CHECK(std::fabs(post.var - ref.var) < 1e-6);
}

TEST_CASE("noiseless testbed: a=1, b=0, sigma=0 gives q = N(0,1), posterior variance 0") {
  GaussianTestbed t;
  t.a = 1.0;
  t.b = 0.0;
  t.sigma = 0.0;
  const Gaussian1D q = t.generator_marginal();
  CHECK(q.mean == 0.0);
  CHECK(q.var == 1.0);
  const AffineGaussian post = t.posterior();
  CHECK(post.var == 0.0);
  CHECK(post.at(0.7).mean == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("testbed posterior agrees with Bayes quadrature on random instances") {
  Rng r(11);
  for (int i = 0; i < 10; ++i) {
    GaussianTestbed t = random_testbed(r);
    const AffineGaussian post = t.posterior();
    const double x = r.uniform(-2.0, 2.0);
    const oracle::PosteriorMoments ref =
        oracle::bayes_posterior_quadrature(t.a, t.b, t.sigma, x);
    CHECK(std::fabs(post.at(x).mean - ref.mean) < 1e-6);
    CHECK(std::fabs(post.at(x).var - ref.var) < 1e-6);
  }
}

TEST_CASE("nash triplet reproduces the data density in every player") {
  const GaussianTestbed t = GaussianTestbed::nash(0.5, 1.2, 0.4);
  const TestbedDensities d = testbed_densities(t);
  CHECK(d.p_theta.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.p_theta.var == doctest::Approx(1.44).epsilon(1e-12));
  CHECK(d.q_alpha.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.q_alpha.var == doctest::Approx(1.44).epsilon(1e-12));
  // encoder == true posterior
  CHECK(t.encoder_density().slope == doctest::Approx(d.posterior.slope).epsilon(1e-12));
  CHECK(t.encoder_density().offset == doctest::Approx(d.posterior.offset).epsilon(1e-12));
  CHECK(t.encoder_density().var == doctest::Approx(d.posterior.var).epsilon(1e-12));
  // sigma must leave room for the latent to explain variance
  CHECK_THROWS_AS(GaussianTestbed::nash(0.0, 1.0, 1.0), ContractError);
}

TEST_CASE("langevin_compose applies the affine kernel stepwise") {
  // one noisy step: N(m, v) -> N(rho m + (d^2/2) t1, rho^2 v + d^2)
  const double theta1 = 1.0, theta2 = 2.0, delta = 0.2;
  const double rho = 1.0 - 0.5 * delta * delta * theta2;
  Gaussian1D one = langevin_compose({1.0, 0.5}, theta1, theta2, delta, 1, true);
  CHECK(one.mean == doctest::Approx(rho * 1.0 + 0.5 * delta * delta * theta1).epsilon(1e-12));
  CHECK(one.var == doctest::Approx(rho * rho * 0.5 + delta * delta).epsilon(1e-12));

  // two steps = one step applied twice
  Gaussian1D two = langevin_compose({1.0, 0.5}, theta1, theta2, delta, 2, true);
  Gaussian1D chained = langevin_compose(one, theta1, theta2, delta, 1, true);
  CHECK(two.mean == doctest::Approx(chained.mean).epsilon(1e-12));
  CHECK(two.var == doctest::Approx(chained.var).epsilon(1e-12));

  // noise-free variant only contracts the variance
  Gaussian1D dry = langevin_compose({1.0, 0.5}, theta1, theta2, delta, 1, false);
  CHECK(dry.var == doctest::Approx(rho * rho * 0.5).epsilon(1e-12));

  // the stationary law of the noisy kernel is preserved under many steps in
  // the small-step limit: variance fixed point is delta^2 / (1 - rho^2)
  const double vstat = delta * delta / (1.0 - rho * rho);
  Gaussian1D stat = langevin_compose({theta1 / theta2, vstat}, theta1, theta2, delta, 50, true);
  CHECK(stat.mean == doctest::Approx(theta1 / theta2).epsilon(1e-9));
  CHECK(stat.var == doctest::Approx(vstat).epsilon(1e-9));
}

TEST_CASE("testbed models round-trip through snapshot_testbed") {
  Rng r(13);
  const GaussianTestbed t = random_testbed(r);
  const TestbedModels m = make_testbed_models(t);
  CHECK(m.energy->theta1() == t.theta1);
  CHECK(m.energy->theta2() == t.theta2);
  CHECK(m.generator->a() == t.a);
  CHECK(m.generator->b() == t.b);
  CHECK(m.generator->sigma() == t.sigma);
  CHECK(m.encoder->u() == t.u);
  CHECK(m.encoder->w() == doctest::Approx(t.w).epsilon(1e-12));
  const GaussianTestbed back =
      snapshot_testbed(*m.energy, *m.generator, *m.encoder, t.m_star, t.s_star);
  CHECK(back.theta1 == t.theta1);
  CHECK(back.a == t.a);
  CHECK(back.c == t.c);
  CHECK(back.w == doctest::Approx(t.w).epsilon(1e-12));
  CHECK(back.m_star == t.m_star);
}

TEST_CASE("affine encoder backward matches finite differences") {
  AffineEncoder e(0.3, -0.1, 0.8);
  Tensor xs = Tensor::matrix(2, 1);
  xs.at(0, 0) = 1.4;
  xs.at(1, 0) = -0.6;
  Tensor dmu = Tensor::matrix(2, 1);
  dmu.at(0, 0) = 0.9;
  dmu.at(1, 0) = -1.2;
  Tensor dlogv = Tensor::matrix(2, 1);
  dlogv.at(0, 0) = 0.4;
  dlogv.at(1, 0) = 0.7;
  const ParamStore g = e.backward(xs, dmu, dlogv);

  auto loss = [&]() {
    const InferOut out = e.infer(xs);
    double acc = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      acc += dmu[i] * out.mu[i] + dlogv[i] * out.logv[i];
    return acc;
  };
  const double h = 1e-6;
  for (const std::string& name : e.params().names()) {
    Tensor& p = e.params().at(name);
    const double keep = p[0];
    p[0] = keep + h;
    const double hi = loss();
    p[0] = keep - h;
    const double lo = loss();
    p[0] = keep;
    CHECK(oracle::rel_err(g.at(name)[0], (hi - lo) / (2.0 * h)) < 1e-6);
  }
}
