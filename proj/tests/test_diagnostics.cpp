#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "ebmvae/datasets.hpp"
#include "ebmvae/diagnostics.hpp"
#include "ebmvae/errors.hpp"
#include "ebmvae/models.hpp"
#include "ebmvae/rng.hpp"
#include "ebmvae/sampling.hpp"

#include "oracles.hpp"
#include "util.hpp"

using namespace ebmvae;

namespace {

GridSpec grid1d(double lo, double hi, std::size_t res) {
  GridSpec g;
  g.dims = 1;
  g.lo = {lo, lo};
  g.hi = {hi, hi};
  g.res = {res, res};
  return g;
}

// E_{x ~ x_dist} KL(p(.|x) || q(.|x)) by outer Simpson over x and inner
// quadrature per conditional; independent of the closed-form implementation.
double brute_expected_kl(const AffineGaussian& p, const AffineGaussian& q,
                         const Gaussian1D& xd) {
  const double sd = std::sqrt(xd.var);
  auto f = [&](double x) {
    const Gaussian1D gp = p.at(x), gq = q.at(x);
    return oracle::normal_pdf(x, xd.mean, xd.var) *
           oracle::gaussian_kl_quadrature(gp.mean, gp.var, gq.mean, gq.var);
  };
  return oracle::integrate(f, xd.mean - 10.0 * sd, xd.mean + 10.0 * sd, 600);
}

// The one-step revision map on Gaussians, rewritten from scratch as a loop so
// the nash_residuals oracle does not reuse langevin_compose.
Gaussian1D ar1_revise(Gaussian1D v, double theta1, double theta2, double delta, int steps) {
  for (int k = 0; k < steps; ++k) {
    const double rho = 1.0 - 0.5 * delta * delta * theta2;
    v = {rho * v.mean + 0.5 * delta * delta * theta1, rho * rho * v.var + delta * delta};
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// grid partition and cell masses
// ---------------------------------------------------------------------------

TEST_CASE("log partition of the standard quadratic energy is log sqrt(2 pi)") {
  QuadraticEnergy m(0.0, 1.0);  // U = x^2 / 2
  const double got = grid_log_partition(m, grid1d(-8.0, 8.0, 2000));
  CHECK(std::fabs(got - 0.5 * std::log(2.0 * 3.14159265358979323846)) < 1e-4);
}

TEST_CASE("zero energy on the unit interval integrates to one") {
  MlpEnergy m(1, {4}, 7);
  for (const std::string& name : m.params().names()) m.params().at(name).fill(0.0);
  CHECK(std::fabs(grid_log_partition(m, grid1d(0.0, 1.0, 64))) < 1e-12);
}

TEST_CASE("partition estimates converge under grid refinement") {
  // relu kinks keep the trapezoid error at O(h^2), so successive refinements
  // show real convergence (a smooth Gaussian hits machine precision instantly)
  MlpEnergy m(1, {6}, 29);
  const double reference = grid_log_partition(m, grid1d(-4.0, 4.0, 8192));
  std::vector<double> errs;
  for (std::size_t res : {32, 64, 128, 256, 512})
    errs.push_back(std::fabs(grid_log_partition(m, grid1d(-4.0, 4.0, res)) - reference));
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) CHECK(errs[i + 1] < errs[i]);
  CHECK(errs.back() < 1e-3);
}

TEST_CASE("grid validation rejects bad shapes") {
  GridSpec g;
  g.dims = 3;
  CHECK_THROWS_AS(g.validate(), UsageError);
  g.dims = 1;
  g.res = {8, 8};  // below the 16-cell minimum
  CHECK_THROWS_AS(g.validate(), ContractError);
  g.res = {64, 64};
  g.lo = {1.0, 0.0};
  g.hi = {-1.0, 1.0};
  CHECK_THROWS_AS(g.validate(), ContractError);
  QuadraticEnergy m(0.0, 1.0);
  GridSpec bad;
  bad.dims = 3;
  CHECK_THROWS_AS(grid_log_partition(m, bad), UsageError);
}

TEST_CASE("identical cell vectors have zero KL and density matches energy cells") {
  const GridSpec g = grid1d(-6.0, 6.0, 400);
  QuadraticEnergy m(0.0, 1.0);
  const std::vector<double> cells = grid_cells_energy(m, g);
  CHECK(grid_kl_cells(cells, cells) == 0.0);

  const DensityFn std_normal = [](double x, double) {
    return oracle::normal_pdf(x, 0.0, 1.0);
  };
  CHECK(grid_kl(std_normal, m, g) < 1e-8);
}

TEST_CASE("histogram KL recovers the closed-form Gaussian divergence") {
  Tensor samples = Tensor::matrix(100000, 1);
  Rng r(12);
  r.fill_normal(samples.data(), samples.numel());  // N(0, 1)
  QuadraticEnergy m(1.0, 1.0);  // p = N(1, 1)
  const double got = grid_kl(samples, m, grid1d(-6.0, 6.0, 200));
  CHECK(std::fabs(got - 0.5) < 0.02);
}

TEST_CASE("cell KL is never meaningfully negative") {
  Rng r(13);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> p(50), q(50);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < 50; ++i) {
      p[i] = r.uniform(1e-4, 1.0);
      q[i] = r.uniform(1e-4, 1.0);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < 50; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    CHECK(grid_kl_cells(p, q) >= -1e-12);
  }
}

// ---------------------------------------------------------------------------
// Gaussian KL helpers
// ---------------------------------------------------------------------------

TEST_CASE("gaussian_kl closed form: zero at equality, 0.5 for a unit shift") {
  CHECK(gaussian_kl(0.7, 1.3, 0.7, 1.3) == 0.0);
  CHECK(gaussian_kl(1.0, 1.0, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_kl(0.0, 0.0, 0.0, 1.0), ContractError);
  CHECK_THROWS_AS(gaussian_kl(0.0, 1.0, 0.0, -1.0), ContractError);
}

TEST_CASE("gaussian_kl matches quadrature on random parameter draws") {
  Rng r(14);
  for (int i = 0; i < 20; ++i) {
    const double ma = r.uniform(-2.0, 2.0), va = r.uniform(0.2, 3.0);
    const double mb = r.uniform(-2.0, 2.0), vb = r.uniform(0.2, 3.0);
    CHECK(std::fabs(gaussian_kl(ma, va, mb, vb) -
                    oracle::gaussian_kl_quadrature(ma, va, mb, vb)) < 1e-6);
  }
}

TEST_CASE("expected conditional KL: zero at equality, quadrature otherwise") {
  const AffineGaussian p{0.4, -0.2, 0.8};
  const Gaussian1D xd{0.3, 1.7};
  CHECK(expected_affine_gaussian_kl(p, p, xd) == 0.0);

  Rng r(15);
  for (int i = 0; i < 5; ++i) {
    const AffineGaussian a{r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(0.3, 2.0)};
    const AffineGaussian b{r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(0.3, 2.0)};
    const Gaussian1D xd2{r.uniform(-1.0, 1.0), r.uniform(0.5, 2.0)};
    CHECK(std::fabs(expected_affine_gaussian_kl(a, b, xd2) - brute_expected_kl(a, b, xd2)) <
          1e-6);
  }
  CHECK_THROWS_AS(expected_affine_gaussian_kl(p, AffineGaussian{0.0, 0.0, 0.0}, xd),
                  ContractError);
}

// ---------------------------------------------------------------------------
// nash_residuals
// ---------------------------------------------------------------------------

TEST_CASE("all residuals vanish at the equilibrium triplet") {
  const GaussianTestbed t = GaussianTestbed::nash(0.5, 1.2, 0.4);
  const NashResiduals r = nash_residuals(t, 0.05, 15);
  CHECK(r.r_theta == 0.0);
  CHECK(r.r_beta == 0.0);
  // the discrete kernel inflates the stationary variance by delta^2/4, so the
  // generator residual is positive but bounded by the step-size defect
  // l^2 delta^8 / (64 s*^8)
  CHECK(r.r_alpha > 0.0);
  CHECK(r.r_alpha < 1e-10);
  const double predicted =
      15.0 * 15.0 * std::pow(0.05, 8) / (64.0 * std::pow(1.2, 8));
  CHECK(r.r_alpha / predicted > 0.3);
  CHECK(r.r_alpha / predicted < 3.0);
}

TEST_CASE("perturbing one player moves only the right residuals") {
  const GaussianTestbed nash = GaussianTestbed::nash(0.2, 1.1, 0.5);
  const double delta = 0.05;
  const int steps = 15;

  GaussianTestbed gb = nash;
  gb.b += 0.1;
  const NashResiduals rb = nash_residuals(gb, delta, steps);
  CHECK(rb.r_theta == 0.0);  // the energy still matches the data exactly
  CHECK(rb.r_alpha > 1e-4);

  GaussianTestbed gt = nash;
  gt.theta1 += 0.1;
  const NashResiduals rt = nash_residuals(gt, delta, steps);
  CHECK(rt.r_theta > 1e-3);

  GaussianTestbed ge = nash;
  ge.w += 0.1;
  const NashResiduals re = nash_residuals(ge, delta, steps);
  CHECK(re.r_beta > 1e-3);
  CHECK(re.r_alpha >= re.r_beta);  // the generator residual includes the encoder gap
}

TEST_CASE("each single-parameter perturbation yields a positive residual somewhere") {
  const GaussianTestbed nash = GaussianTestbed::nash(0.2, 1.1, 0.5);
  auto perturbed = [&](auto set) {
    GaussianTestbed g = nash;
    set(g);
    return nash_residuals(g, 0.05, 15);
  };
  CHECK(perturbed([](GaussianTestbed& g) { g.theta1 += 0.1; }).r_theta > 1e-3);
  CHECK(perturbed([](GaussianTestbed& g) { g.theta2 += 0.1; }).r_theta > 1e-3);
  CHECK(perturbed([](GaussianTestbed& g) { g.a += 0.1; }).r_alpha > 1e-3);
  CHECK(perturbed([](GaussianTestbed& g) { g.b += 0.1; }).r_alpha > 1e-3);
  CHECK(perturbed([](GaussianTestbed& g) { g.u += 0.1; }).r_beta > 1e-3);
  CHECK(perturbed([](GaussianTestbed& g) { g.c += 0.1; }).r_beta > 1e-3);
  CHECK(perturbed([](GaussianTestbed& g) { g.w += 0.1; }).r_beta > 1e-3);
}

TEST_CASE("nash_residuals agrees with quadrature oracles on a random testbed") {
  GaussianTestbed t;
  t.m_star = 0.4;
  t.s_star = 1.3;
  t.theta1 = 0.5;
  t.theta2 = 0.8;
  t.a = 1.1;
  t.b = -0.2;
  t.sigma = 0.6;
  t.u = 0.35;
  t.c = 0.05;
  t.w = 0.7;
  const double delta = 0.2;
  const int steps = 5;
  const NashResiduals got = nash_residuals(t, delta, steps);

  // r_theta: KL(data || p_theta) by density quadrature
  const Gaussian1D data = t.data_density();
  const Gaussian1D ebm = t.ebm_density();
  const double r_theta = oracle::kl_densities(
      [&](double x) { return oracle::normal_pdf(x, data.mean, data.var); },
      [&](double x) { return oracle::normal_pdf(x, ebm.mean, ebm.var); }, -14.0, 14.0,
      40000);
  CHECK(std::fabs(got.r_theta - r_theta) < 1e-6);

  // revised marginal after `steps` noisy kernel applications, recomputed here
  const Gaussian1D revised =
      ar1_revise(t.generator_marginal(), t.theta1, t.theta2, delta, steps);

  // r_beta: conditional KL averaged over the revised marginal
  const double r_beta = brute_expected_kl(t.encoder_density(), t.posterior(), revised);
  CHECK(std::fabs(got.r_beta - r_beta) < 1e-6);

  // r_alpha: marginal movement plus the encoder gap
  const Gaussian1D q = t.generator_marginal();
  const double move = oracle::kl_densities(
      [&](double x) { return oracle::normal_pdf(x, revised.mean, revised.var); },
      [&](double x) { return oracle::normal_pdf(x, q.mean, q.var); }, -14.0, 14.0, 40000);
  CHECK(std::fabs(got.r_alpha - (move + r_beta)) < 1e-6);
}

// ---------------------------------------------------------------------------
// divergence entries
// ---------------------------------------------------------------------------

TEST_CASE("testbed divergence entry is identically zero at the equilibrium") {
  const DivergenceEntry e =
      testbed_divergence_entry(3, GaussianTestbed::nash(0.1, 1.0, 0.6));
  CHECK(e.iter == 3);
  REQUIRE(e.kl_data_ebm.has_value());
  REQUIRE(e.kl_ebm_gen.has_value());
  REQUIRE(e.kl_enc_post.has_value());
  CHECK(std::fabs(*e.kl_data_ebm) < 1e-12);
  CHECK(std::fabs(*e.kl_ebm_gen) < 1e-12);
  CHECK(std::fabs(*e.kl_enc_post) < 1e-12);
}

TEST_CASE("testbed divergence entries are nonnegative off equilibrium") {
  Rng r(16);
  for (int i = 0; i < 10; ++i) {
    GaussianTestbed t;
    t.m_star = r.uniform(-1.0, 1.0);
    t.s_star = r.uniform(0.7, 1.5);
    t.theta1 = r.uniform(-1.0, 1.0);
    t.theta2 = r.uniform(0.4, 2.0);
    t.a = r.uniform(0.5, 1.5);
    t.b = r.uniform(-1.0, 1.0);
    t.sigma = r.uniform(0.2, 0.8);
    t.u = r.uniform(-0.5, 0.5);
    t.c = r.uniform(-0.5, 0.5);
    t.w = r.uniform(0.3, 1.2);
    const DivergenceEntry e = testbed_divergence_entry(i, t);
    CHECK(*e.kl_data_ebm >= 0.0);
    CHECK(*e.kl_ebm_gen >= 0.0);
    CHECK(*e.kl_enc_post >= 0.0);
  }
}

TEST_CASE("neural divergence entry fills exactly the reachable fields") {
  MlpEnergy m2(2, {8}, 21);
  MlpGenerator g2(2, 2, {8}, 0.3, 22);
  MlpEncoder e2(2, 2, {8}, 23);
  Tensor data = Tensor::matrix(64, 2);
  Rng r(17);
  r.fill_normal(data.data(), data.numel());
  GridSpec grid;  // default 2-D
  const DivergenceEntry full =
      neural_divergence_entry(5, m2, g2, &e2, data, grid, 512, 9);
  CHECK(full.iter == 5);
  CHECK(full.kl_data_ebm.has_value());
  CHECK(full.kl_ebm_gen.has_value());
  CHECK(full.kl_enc_post.has_value());
  CHECK(*full.kl_data_ebm >= 0.0);
  CHECK(*full.kl_ebm_gen >= 0.0);
  CHECK(*full.kl_enc_post >= 0.0);

  // 3-D data cannot use the 2-D grid; 3-D latent cannot use the latent grid
  MlpEnergy m3(3, {8}, 24);
  MlpGenerator g3(3, 3, {8}, 0.3, 25);
  MlpEncoder e3(3, 3, {8}, 26);
  Tensor data3 = Tensor::matrix(16, 3);
  r.fill_normal(data3.data(), data3.numel());
  const DivergenceEntry none =
      neural_divergence_entry(6, m3, g3, &e3, data3, grid, 128, 9);
  CHECK_FALSE(none.kl_data_ebm.has_value());
  CHECK_FALSE(none.kl_ebm_gen.has_value());
  CHECK_FALSE(none.kl_enc_post.has_value());

  // no encoder, no encoder-posterior term
  const DivergenceEntry no_enc =
      neural_divergence_entry(7, m2, g2, nullptr, data, grid, 128, 9);
  CHECK(no_enc.kl_data_ebm.has_value());
  CHECK_FALSE(no_enc.kl_enc_post.has_value());
}

TEST_CASE("divergence trace appends in order") {
  DivergenceTrace trace;
  divergence_trace_update(trace, testbed_divergence_entry(0, GaussianTestbed{}));
  divergence_trace_update(trace, testbed_divergence_entry(10, GaussianTestbed{}));
  REQUIRE(trace.entries.size() == 2);
  CHECK(trace.entries[0].iter == 0);
  CHECK(trace.entries[1].iter == 10);
}

// ---------------------------------------------------------------------------
// mode coverage
// ---------------------------------------------------------------------------

TEST_CASE("samples sitting on one center cover exactly that mode") {
  Tensor centers = Tensor::matrix(3, 2);
  testutil::set_matrix(centers, {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
  Tensor samples = Tensor::matrix(50, 2);  // all at the origin
  const std::vector<double> cov = mode_coverage(samples, centers, 0.1);
  REQUIRE(cov.size() == 3);
  CHECK(cov[0] == 1.0);
  CHECK(cov[1] == 0.0);
  CHECK(cov[2] == 0.0);
}

TEST_CASE("an equal mixture over eight modes covers each at the chi-square mass") {
  const double mode_std = 0.08;
  const Tensor centers = gaussian_grid_centers(4, 2, 0.75);
  REQUIRE(centers.rows() == 8);
  const std::size_t n = 20000;
  Tensor samples = Tensor::matrix(n, 2);
  Rng r(18);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(r.uniform(0.0, 8.0)) % 8;
    samples.at(i, 0) = centers.at(k, 0) + mode_std * r.normal();
    samples.at(i, 1) = centers.at(k, 1) + mode_std * r.normal();
  }
  const std::vector<double> cov = mode_coverage(samples, centers, 3.0 * mode_std);
  // P(chi2_2 <= 9) = 1 - exp(-4.5), so each mode holds about 0.1236; the
  // 0.007 margin is three binomial standard errors
  double total = 0.0;
  for (double f : cov) {
    CHECK(std::fabs(f - 0.125 * (1.0 - std::exp(-4.5))) < 0.007);
    total += f;
  }
  CHECK(total <= 1.0 + 1e-12);

  const std::vector<double> tiny = mode_coverage(samples, centers, 1e-12);
  for (double f : tiny) CHECK(f < 1e-3);
}

// ---------------------------------------------------------------------------
// latent interpolation
// ---------------------------------------------------------------------------

TEST_CASE("interpolation endpoints are the generator means of the endpoints") {
  MlpGenerator g(2, 2, {8}, 0.3, 27);
  Tensor zl({2}, 0.0);
  zl[0] = 0.6;
  zl[1] = -0.4;
  Tensor zr({2}, 0.0);
  zr[0] = -1.1;
  zr[1] = 0.9;
  const Tensor path = latent_interpolate(g, zl, zr, 7);
  REQUIRE(path.rows() == 7);
  REQUIRE(path.cols() == 2);

  Tensor zmat = Tensor::matrix(2, 2);
  for (std::size_t j = 0; j < 2; ++j) {
    zmat.at(0, j) = zl[j];
    zmat.at(1, j) = zr[j];
  }
  const Tensor ends = g.mean(zmat);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(path.at(0, j) == ends.at(0, j));
    CHECK(path.at(6, j) == ends.at(1, j));
  }
  CHECK_THROWS_AS(latent_interpolate(g, zl, zr, 1), UsageError);
}

TEST_CASE("the path follows the spherical combination for an identity generator") {
  AffineGenerator g(1.0, 0.0, 0.1);  // 1-D identity mean
  Tensor zl({1}, 0.0);
  zl[0] = 0.8;
  Tensor zr({1}, 0.0);
  zr[0] = -0.5;
  const std::size_t steps = 6;
  const Tensor path = latent_interpolate(g, zl, zr, steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double eta = 1.0 - static_cast<double>(k) / static_cast<double>(steps - 1);
    const double want = eta * 0.8 + std::sqrt(1.0 - eta * eta) * (-0.5);
    CHECK(path.at(k, 0) == doctest::Approx(want).epsilon(1e-12));
  }

  // equal endpoints still map to the same generator output at both ends
  const Tensor loop = latent_interpolate(g, zl, zl, 5);
  CHECK(loop.at(0, 0) == loop.at(4, 0));
}

// ---------------------------------------------------------------------------
// energy gap and trend test
// ---------------------------------------------------------------------------

TEST_CASE("energy gap is zero on identical batches and matches a manual mean") {
  MlpEnergy m(2, {8}, 28);
  Tensor xs = Tensor::matrix(32, 2);
  Rng r(19);
  r.fill_normal(xs.data(), xs.numel());
  CHECK(energy_gap(m, xs, xs) == 0.0);

  Tensor ys = Tensor::matrix(32, 2);
  r.fill_normal(ys.data(), ys.numel());
  const Tensor ex = m.energy(xs), ey = m.energy(ys);
  double want = 0.0;
  for (std::size_t i = 0; i < 32; ++i) want += ex[i] - ey[i];
  want /= 32.0;
  CHECK(energy_gap(m, xs, ys) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("noise-free revision never increases the mean energy") {
  const GaussianTestbed t = GaussianTestbed::nash(0.0, 1.0, 0.5);
  const TestbedModels models = make_testbed_models(t);
  SamplerConfig cfg;
  cfg.step_size = 0.1;
  cfg.steps = 20;
  cfg.noise_enabled = false;
  cfg.seed = 20;
  const AncestralChain batch =
      ancestral_langevin_sample(*models.generator, *models.energy, 256, cfg);
  CHECK(energy_gap(*models.energy, batch.chain.initial, batch.chain.final_x) >= -1e-12);
}

TEST_CASE("the trend test flags direction correctly") {
  std::vector<double> down, up, flat;
  for (int i = 0; i < 100; ++i) {
    down.push_back(-static_cast<double>(i) + 0.3 * std::sin(0.7 * i));
    up.push_back(static_cast<double>(i));
    flat.push_back(1.0);
  }
  const TrendResult d = trend_test(down, 2.326);
  CHECK(d.decreasing);
  CHECK(d.z < -2.326);
  const TrendResult u = trend_test(up, 2.326);
  CHECK_FALSE(u.decreasing);
  CHECK(u.z > 2.326);
  const TrendResult f = trend_test(flat, 2.326);
  CHECK_FALSE(f.decreasing);
  CHECK(f.z == 0.0);
}
