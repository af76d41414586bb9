#include "ebmvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ebmvae/errors.hpp"
#include "ebmvae/rng.hpp"
#include "ebmvae/sampling.hpp"

namespace ebmvae {

namespace {

constexpr std::size_t kEnergyChunk = 4096;

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Normalize log-masses in place into probabilities.
void softmax_inplace(std::vector<double>& logs) {
  const double lse = log_sum_exp(logs);
  if (!std::isfinite(lse)) throw ContractError("grid masses do not normalize");
  for (double& x : logs) x = std::exp(x - lse);
}

Tensor energies_chunked(const EnergyModel& m, const Tensor& pts) {
  const std::size_t n = pts.rows(), d = pts.cols();
  Tensor out({n}, 0.0);
  for (std::size_t start = 0; start < n; start += kEnergyChunk) {
    const std::size_t len = std::min(kEnergyChunk, n - start);
    Tensor chunk = Tensor::matrix(len, d);
    std::memcpy(chunk.data(), pts.row_ptr(start), len * d * sizeof(double));
    const Tensor e = m.energy(chunk);
    for (std::size_t i = 0; i < len; ++i) out[start + i] = e[i];
  }
  return out;
}

// Cell centers in row-major order: index = ix * res[1] + iy for 2-D.
Tensor grid_centers(const GridSpec& g) {
  g.validate();
  Tensor out = Tensor::matrix(g.cell_count(), g.dims);
  if (g.dims == 1) {
    const double h = (g.hi[0] - g.lo[0]) / static_cast<double>(g.res[0]);
    for (std::size_t i = 0; i < g.res[0]; ++i)
      out.at(i, 0) = g.lo[0] + (static_cast<double>(i) + 0.5) * h;
    return out;
  }
  const double hx = (g.hi[0] - g.lo[0]) / static_cast<double>(g.res[0]);
  const double hy = (g.hi[1] - g.lo[1]) / static_cast<double>(g.res[1]);
  std::size_t c = 0;
  for (std::size_t ix = 0; ix < g.res[0]; ++ix) {
    const double x = g.lo[0] + (static_cast<double>(ix) + 0.5) * hx;
    for (std::size_t iy = 0; iy < g.res[1]; ++iy, ++c) {
      out.at(c, 0) = x;
      out.at(c, 1) = g.lo[1] + (static_cast<double>(iy) + 0.5) * hy;
    }
  }
  return out;
}

}  // namespace

std::size_t GridSpec::cell_count() const {
  std::size_t n = res[0];
  if (dims == 2) n *= res[1];
  return n;
}

double GridSpec::cell_volume() const {
  double v = (hi[0] - lo[0]) / static_cast<double>(res[0]);
  if (dims == 2) v *= (hi[1] - lo[1]) / static_cast<double>(res[1]);
  return v;
}

void GridSpec::validate() const {
  if (dims != 1 && dims != 2) throw UsageError("grid supports 1-D and 2-D only");
  for (std::size_t k = 0; k < dims; ++k) {
    if (res[k] < 16) throw ContractError("grid resolution below 16 cells per axis");
    if (!(std::isfinite(lo[k]) && std::isfinite(hi[k]) && hi[k] > lo[k]))
      throw ContractError("grid bounds must be finite with hi > lo");
  }
}

double grid_log_partition(const EnergyModel& m, const GridSpec& grid) {
  grid.validate();
  if (m.dim() != grid.dims) throw UsageError("grid dims do not match energy dims");
  // Trapezoid nodes are the cell edges, res+1 per axis, end weights 1/2.
  const std::size_t nx = grid.res[0] + 1;
  const std::size_t ny = grid.dims == 2 ? grid.res[1] + 1 : 1;
  const double hx = (grid.hi[0] - grid.lo[0]) / static_cast<double>(grid.res[0]);
  const double hy =
      grid.dims == 2 ? (grid.hi[1] - grid.lo[1]) / static_cast<double>(grid.res[1]) : 1.0;
  Tensor nodes = Tensor::matrix(nx * ny, grid.dims);
  std::vector<double> logw(nx * ny, 0.0);
  std::size_t c = 0;
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const double wx = (ix == 0 || ix + 1 == nx) ? 0.5 : 1.0;
    for (std::size_t iy = 0; iy < ny; ++iy, ++c) {
      nodes.at(c, 0) = grid.lo[0] + static_cast<double>(ix) * hx;
      double w = wx;
      if (grid.dims == 2) {
        nodes.at(c, 1) = grid.lo[1] + static_cast<double>(iy) * hy;
        w *= (iy == 0 || iy + 1 == ny) ? 0.5 : 1.0;
      }
      logw[c] = std::log(w);
    }
  }
  const Tensor e = energies_chunked(m, nodes);
  std::vector<double> terms(nx * ny);
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = -e[i] + logw[i];
  double lse = log_sum_exp(terms);
  lse += std::log(hx);
  if (grid.dims == 2) lse += std::log(hy);
  if (!std::isfinite(lse)) throw NonNormalizableError("partition integral is not finite");
  return lse;
}

std::vector<double> grid_cells_energy(const EnergyModel& m, const GridSpec& grid) {
  grid.validate();
  if (m.dim() != grid.dims) throw UsageError("grid dims do not match energy dims");
  const Tensor e = energies_chunked(m, grid_centers(grid));
  std::vector<double> logs(e.numel());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = -e[i];
  softmax_inplace(logs);
  return logs;
}

std::vector<double> grid_cells_density(const DensityFn& f, const GridSpec& grid) {
  grid.validate();
  const Tensor centers = grid_centers(grid);
  std::vector<double> mass(centers.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    const double x = centers.at(i, 0);
    const double y = grid.dims == 2 ? centers.at(i, 1) : 0.0;
    const double v = f(x, y);
    if (!std::isfinite(v) || v < 0.0) throw ContractError("density must be finite and >= 0");
    mass[i] = v;
    total += v;
  }
  if (total <= 0.0) throw ContractError("density vanishes on the whole grid");
  for (double& v : mass) v /= total;
  return mass;
}

std::vector<double> grid_cells_histogram(const Tensor& samples, const GridSpec& grid) {
  grid.validate();
  if (samples.rows() == 0) throw UsageError("histogram needs at least one sample");
  if (samples.cols() != grid.dims) throw UsageError("sample dims do not match grid");
  const std::size_t cells = grid.cell_count();
  std::vector<double> count(cells, 0.0);
  const double hx = (grid.hi[0] - grid.lo[0]) / static_cast<double>(grid.res[0]);
  const double hy =
      grid.dims == 2 ? (grid.hi[1] - grid.lo[1]) / static_cast<double>(grid.res[1]) : 1.0;
  std::size_t inside = 0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const double x = samples.at(r, 0);
    const auto ix = static_cast<long long>(std::floor((x - grid.lo[0]) / hx));
    if (ix < 0 || ix >= static_cast<long long>(grid.res[0])) continue;
    std::size_t c = static_cast<std::size_t>(ix);
    if (grid.dims == 2) {
      const double y = samples.at(r, 1);
      const auto iy = static_cast<long long>(std::floor((y - grid.lo[1]) / hy));
      if (iy < 0 || iy >= static_cast<long long>(grid.res[1])) continue;
      c = c * grid.res[1] + static_cast<std::size_t>(iy);
    }
    count[c] += 1.0;
    ++inside;
  }
  // Half a pseudo-count per cell keeps empty cells off zero so KL stays finite.
  const double denom =
      static_cast<double>(inside) + 0.5 * static_cast<double>(cells);
  for (double& v : count) v = (v + 0.5) / denom;
  return count;
}

double grid_kl_cells(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty()) throw UsageError("cell vectors must match");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(std::isfinite(p[i]) && std::isfinite(q[i])) || p[i] < 0.0 || q[i] < 0.0)
      throw ContractError("cell masses must be finite and >= 0");
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double grid_kl(const Tensor& p_samples, const EnergyModel& q, const GridSpec& grid) {
  return grid_kl_cells(grid_cells_histogram(p_samples, grid), grid_cells_energy(q, grid));
}

double grid_kl(const DensityFn& p, const EnergyModel& q, const GridSpec& grid) {
  return grid_kl_cells(grid_cells_density(p, grid), grid_cells_energy(q, grid));
}

double gaussian_kl(double mean_a, double var_a, double mean_b, double var_b) {
  if (!(var_a > 0.0) || !(var_b > 0.0)) throw ContractError("gaussian_kl needs positive variances");
  const double d = mean_a - mean_b;
  return 0.5 * (std::log(var_b / var_a) + (var_a + d * d) / var_b - 1.0);
}

double expected_affine_gaussian_kl(const AffineGaussian& p, const AffineGaussian& q,
                                   const Gaussian1D& x_dist) {
  if (!(p.var > 0.0) || !(q.var > 0.0))
    throw ContractError("expected_affine_gaussian_kl needs positive variances");
  const double ds = p.slope - q.slope;
  const double mean_gap_sq =
      (ds * x_dist.mean + (p.offset - q.offset)) * (ds * x_dist.mean + (p.offset - q.offset)) +
      ds * ds * x_dist.var;
  return 0.5 * (std::log(q.var / p.var) + p.var / q.var - 1.0) + mean_gap_sq / (2.0 * q.var);
}

NashResiduals nash_residuals(const GaussianTestbed& t, double delta, int steps) {
  const TestbedDensities d = testbed_densities(t);
  const Gaussian1D revised =
      langevin_compose(d.q_alpha, t.theta1, t.theta2, delta, steps, /*with_noise=*/true);
  const double enc_gap =
      expected_affine_gaussian_kl(t.encoder_density(), d.posterior, revised);
  NashResiduals r;
  r.r_theta = gaussian_kl(d.data.mean, d.data.var, d.p_theta.mean, d.p_theta.var);
  r.r_alpha = gaussian_kl(revised.mean, revised.var, d.q_alpha.mean, d.q_alpha.var) + enc_gap;
  r.r_beta = enc_gap;
  return r;
}

DivergenceEntry testbed_divergence_entry(std::size_t iter, const GaussianTestbed& t) {
  const TestbedDensities d = testbed_densities(t);
  DivergenceEntry e;
  e.iter = iter;
  e.kl_data_ebm = gaussian_kl(d.data.mean, d.data.var, d.p_theta.mean, d.p_theta.var);
  e.kl_ebm_gen = gaussian_kl(d.p_theta.mean, d.p_theta.var, d.q_alpha.mean, d.q_alpha.var);
  e.kl_enc_post =
      expected_affine_gaussian_kl(t.encoder_density(), d.posterior, d.q_alpha);
  return e;
}

DivergenceEntry neural_divergence_entry(std::size_t iter, const EnergyModel& m,
                                        const GeneratorModel& g, const InferenceModel* e,
                                        const Tensor& data_samples, const GridSpec& grid,
                                        std::size_t gen_samples, std::uint64_t seed) {
  DivergenceEntry out;
  out.iter = iter;
  if (m.dim() == grid.dims) {
    const std::vector<double> ebm_cells = grid_cells_energy(m, grid);
    if (data_samples.rows() > 0 && data_samples.cols() == grid.dims)
      out.kl_data_ebm = grid_kl_cells(grid_cells_histogram(data_samples, grid), ebm_cells);
    if (gen_samples > 0) {
      const AncestralDraw draw = ancestral_sample(g, gen_samples, derive_seed(seed, 1));
      out.kl_ebm_gen = grid_kl_cells(ebm_cells, grid_cells_histogram(draw.x, grid));
    }
  }
  const std::size_t d = g.latent_dim();
  if (e != nullptr && d <= 2 && data_samples.rows() > 0) {
    // Quadrature over a latent grid: posterior(z | x) is prior(z) times the
    // generator likelihood, both evaluable at every grid node.
    GridSpec zgrid;
    zgrid.dims = d;
    zgrid.lo = {-5.0, -5.0};
    zgrid.hi = {5.0, 5.0};
    zgrid.res = {64, 64};
    const Tensor zc = grid_centers(zgrid);
    const std::size_t cells = zc.rows();
    const Tensor means = g.mean(zc);
    std::vector<double> log_prior(cells, 0.0);
    for (std::size_t i = 0; i < cells; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += zc.at(i, j) * zc.at(i, j);
      log_prior[i] = -0.5 * s;
    }
    const std::size_t kx = std::min<std::size_t>(8, data_samples.rows());
    Tensor xs = Tensor::matrix(kx, data_samples.cols());
    for (std::size_t r = 0; r < kx; ++r)
      std::memcpy(xs.row_ptr(r), data_samples.row_ptr(r), data_samples.cols() * sizeof(double));
    const InferOut enc = e->infer(xs);
    const double inv2s = 1.0 / (2.0 * g.sigma() * g.sigma());
    double total = 0.0;
    for (std::size_t r = 0; r < kx; ++r) {
      std::vector<double> log_post(cells), log_enc(cells);
      for (std::size_t i = 0; i < cells; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < xs.cols(); ++j) {
          const double diff = xs.at(r, j) - means.at(i, j);
          sq += diff * diff;
        }
        log_post[i] = log_prior[i] - sq * inv2s;
        double le = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double v = std::exp(enc.logv.at(r, j));
          const double dz = zc.at(i, j) - enc.mu.at(r, j);
          le += -dz * dz / (2.0 * v) - 0.5 * enc.logv.at(r, j);
        }
        log_enc[i] = le;
      }
      softmax_inplace(log_post);
      softmax_inplace(log_enc);
      total += grid_kl_cells(log_enc, log_post);
    }
    out.kl_enc_post = total / static_cast<double>(kx);
  }
  return out;
}

void divergence_trace_update(DivergenceTrace& trace, DivergenceEntry entry) {
  trace.entries.push_back(std::move(entry));
}

std::vector<double> mode_coverage(const Tensor& samples, const Tensor& centers,
                                  double radius) {
  if (samples.rows() == 0 || centers.rows() == 0)
    throw UsageError("mode_coverage needs samples and centers");
  if (samples.cols() != centers.cols())
    throw UsageError("samples and centers disagree on dimension");
  if (!(radius > 0.0)) throw UsageError("mode_coverage radius must be positive");
  std::vector<double> frac(centers.rows(), 0.0);
  const double r2 = radius * radius;
  for (std::size_t s = 0; s < samples.rows(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centers.rows(); ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < samples.cols(); ++j) {
        const double diff = samples.at(s, j) - centers.at(c, j);
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        arg = c;
      }
    }
    if (best <= r2) frac[arg] += 1.0;
  }
  for (double& f : frac) f /= static_cast<double>(samples.rows());
  return frac;
}

Tensor latent_interpolate(const GeneratorModel& g, const Tensor& z_l, const Tensor& z_r,
                          std::size_t steps) {
  if (steps < 2) throw UsageError("latent_interpolate needs at least two steps");
  const std::size_t d = g.latent_dim();
  if (z_l.rank() != 1 || z_r.rank() != 1 || z_l.numel() != d || z_r.numel() != d)
    throw UsageError("latent endpoints must be rank-1 of the latent dimension");
  Tensor zs = Tensor::matrix(steps, d);
  for (std::size_t k = 0; k < steps; ++k) {
    const double eta =
        1.0 - static_cast<double>(k) / static_cast<double>(steps - 1);
    const double co = std::sqrt(std::max(0.0, 1.0 - eta * eta));
    for (std::size_t j = 0; j < d; ++j) zs.at(k, j) = eta * z_l[j] + co * z_r[j];
  }
  return g.mean(zs);
}

double energy_gap(const EnergyModel& m, const Tensor& x_hat, const Tensor& x_tilde) {
  if (x_hat.rows() == 0 || x_tilde.rows() == 0) throw UsageError("energy_gap on empty batch");
  const Tensor eh = m.energy(x_hat);
  const Tensor et = m.energy(x_tilde);
  double mh = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < eh.numel(); ++i) mh += eh[i];
  for (std::size_t i = 0; i < et.numel(); ++i) mt += et[i];
  return mh / static_cast<double>(eh.numel()) - mt / static_cast<double>(et.numel());
}

TrendResult trend_test(const std::vector<double>& series, double z_crit) {
  const std::size_t n = series.size();
  if (n < 4) throw UsageError("trend_test needs at least four points");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double diff = series[j] - series[i];
      if (diff > 0.0)
        s += 1.0;
      else if (diff < 0.0)
        s -= 1.0;
    }
  const double nn = static_cast<double>(n);
  const double var = nn * (nn - 1.0) * (2.0 * nn + 5.0) / 18.0;
  TrendResult r;
  if (s > 0.0)
    r.z = (s - 1.0) / std::sqrt(var);
  else if (s < 0.0)
    r.z = (s + 1.0) / std::sqrt(var);
  r.decreasing = r.z <= -z_crit;
  return r;
}

}  // namespace ebmvae
