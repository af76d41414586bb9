#pragma once

#include <cstdint>
#include <string>

#include "ebmvae/tensor.hpp"

namespace ebmvae {

// Synthetic 2-D toy families plus grayscale image patches. Every generator is
// a pure function of (spec, n, seed) and lands inside [-1, 1]^D.
struct DatasetSpec {
  std::string kind = "gaussian_grid";  // gaussian_grid | ring | two_spirals |
                                       // checkerboard | patches
  std::size_t n = 10000;               // default sample count for training runs

  // gaussian_grid: kx * ky isotropic modes, centers evenly spaced in
  // [-span, span] per axis (a single count k means k x k).
  std::size_t kx = 2, ky = 2;
  double mode_std = 0.08;
  double span = 0.75;

  // ring (also the conditional toy task): radius plus radial Gaussian noise.
  double radius = 0.7;
  double noise_std = 0.03;  // shared by two_spirals

  // patches: random patch x patch crops from the PGM files in patch_dir,
  // pixel range mapped to [-1, 1].
  std::string patch_dir;
  std::size_t patch = 8;
};

struct Dataset {
  Tensor xs;       // [n, D]
  Tensor centers;  // gaussian_grid mode centers [kx*ky, 2]; empty otherwise
};

// Data dimension the spec will produce (2 for the toy families, patch^2 for
// patches).
std::size_t dataset_dim(const DatasetSpec& spec);

// Rejects unknown kinds and out-of-range parameters with the offending key
// named.
void validate_dataset_spec(const DatasetSpec& spec);

Tensor gaussian_grid_centers(std::size_t kx, std::size_t ky, double span);

Dataset dataset_generate(const DatasetSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace ebmvae
