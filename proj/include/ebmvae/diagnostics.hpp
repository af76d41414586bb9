#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ebmvae/models.hpp"
#include "ebmvae/tensor.hpp"

namespace ebmvae {

// Evaluation grid over 1-D or 2-D space. res counts cells per axis (cell
// centers are the evaluation nodes for densities; quadrature adds the edge
// nodes itself). Minimum 16 cells per axis.
struct GridSpec {
  std::size_t dims = 2;
  std::array<double, 2> lo{-4.0, -4.0};
  std::array<double, 2> hi{4.0, 4.0};
  std::array<std::size_t, 2> res{200, 200};

  std::size_t cell_count() const;
  double cell_volume() const;
  void validate() const;
};

// log integral of exp(-U) by trapezoid rule on the grid (nodes = cell edges).
// Supported for dims <= 2; log-sum-exp keeps it stable for large energies.
double grid_log_partition(const EnergyModel& m, const GridSpec& grid);

// Density evaluated at a cell center; 1-D grids ignore the second coordinate.
using DensityFn = std::function<double(double, double)>;

// Normalized cell masses, three sources. The histogram variant smooths with
// one half pseudo-count per cell and ignores samples that fall off the grid.
std::vector<double> grid_cells_energy(const EnergyModel& m, const GridSpec& grid);
std::vector<double> grid_cells_density(const DensityFn& f, const GridSpec& grid);
std::vector<double> grid_cells_histogram(const Tensor& samples, const GridSpec& grid);

// KL between two cell-mass vectors from the helpers above.
double grid_kl_cells(const std::vector<double>& p, const std::vector<double>& q);

// KL(sample histogram || grid-normalized exp(-U)).
double grid_kl(const Tensor& p_samples, const EnergyModel& q, const GridSpec& grid);
// KL(density || grid-normalized exp(-U)).
double grid_kl(const DensityFn& p, const EnergyModel& q, const GridSpec& grid);

// Exact KL(N(ma, va) || N(mb, vb)).
double gaussian_kl(double mean_a, double var_a, double mean_b, double var_b);

// KL(N(s1 x + o1, v1) || N(s2 x + o2, v2)) averaged over x ~ N(mx, vx); the
// conditional-KL average used for encoder-vs-posterior terms on the testbed.
double expected_affine_gaussian_kl(const AffineGaussian& p, const AffineGaussian& q,
                                   const Gaussian1D& x_dist);

struct NashResiduals {
  double r_theta = 0.0;  // KL(data || p_theta)
  double r_alpha = 0.0;  // KL(M q_alpha || q_alpha) + KL(encoder || posterior)
  double r_beta = 0.0;   // KL(encoder || posterior)
};

// Stationarity gaps of the three players at the current testbed parameters,
// with the revision kernel applied for `steps` noisy Langevin steps of size
// delta (closed-form composition). Conditional KLs average over x ~ M q_alpha.
NashResiduals nash_residuals(const GaussianTestbed& t, double delta, int steps);

struct DivergenceEntry {
  std::size_t iter = 0;
  std::optional<double> kl_data_ebm;   // KL(data || p_theta)
  std::optional<double> kl_ebm_gen;    // KL(p_theta || q_alpha)
  std::optional<double> kl_enc_post;   // E_x KL(encoder(.|x) || posterior(.|x))
};

struct DivergenceTrace {
  std::vector<DivergenceEntry> entries;
};

// Closed-form entry for the linear-Gaussian testbed. The conditional KL
// averages over the generator marginal.
DivergenceEntry testbed_divergence_entry(std::size_t iter, const GaussianTestbed& t);

// Grid-estimated entry for neural models on low-dimensional data: data-vs-EBM
// uses the data histogram, EBM-vs-generator uses a fresh ancestral sample
// histogram, encoder-vs-posterior integrates over a latent grid (latent dim
// <= 2 only). Fields stay empty when a quantity is out of this estimator's
// reach (data dim > 2, latent dim > 2).
DivergenceEntry neural_divergence_entry(std::size_t iter, const EnergyModel& m,
                                        const GeneratorModel& g, const InferenceModel* e,
                                        const Tensor& data_samples, const GridSpec& grid,
                                        std::size_t gen_samples, std::uint64_t seed);

void divergence_trace_update(DivergenceTrace& trace, DivergenceEntry entry);

// Fraction of samples whose nearest center lies within `radius`, per center;
// the fractions sum to at most 1.
std::vector<double> mode_coverage(const Tensor& samples, const Tensor& centers,
                                  double radius);

// Spherical path between two latents: row k is the generator mean at
// eta = 1 - k/(steps-1), i.e. z = eta z_l + sqrt(1 - eta^2) z_r. Row 0 is
// g(z_l), the last row is g(z_r). steps >= 2.
Tensor latent_interpolate(const GeneratorModel& g, const Tensor& z_l, const Tensor& z_r,
                          std::size_t steps);

// mean U(x_hat) - mean U(x_tilde): how much energy the revision sheds.
double energy_gap(const EnergyModel& m, const Tensor& x_hat, const Tensor& x_tilde);

// Mann-Kendall trend statistic. z < 0 indicates a downward trend; pass the
// normal critical value (2.326 for alpha = 0.01 one-sided).
struct TrendResult {
  double z = 0.0;
  bool decreasing = false;
};
TrendResult trend_test(const std::vector<double>& series, double z_crit);

}  // namespace ebmvae
