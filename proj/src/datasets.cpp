#include "ebmvae/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "ebmvae/errors.hpp"
#include "ebmvae/images.hpp"
#include "ebmvae/rng.hpp"

namespace ebmvae {

namespace {

constexpr std::uint64_t kStreamDataset = 301;
constexpr double kPi = 3.14159265358979323846;

double clamp_unit(double v) { return std::min(1.0, std::max(-1.0, v)); }

std::size_t pick_index(Rng& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
  return std::min(i, n - 1);
}

Dataset make_gaussian_grid(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  Dataset d;
  d.centers = gaussian_grid_centers(spec.kx, spec.ky, spec.span);
  d.xs = Tensor::matrix(n, 2);
  const std::size_t k = d.centers.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = pick_index(rng, k);
    for (std::size_t j = 0; j < 2; ++j)
      d.xs.at(i, j) = clamp_unit(d.centers.at(m, j) + spec.mode_std * rng.normal());
  }
  return d;
}

Dataset make_ring(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  Dataset d;
  d.xs = Tensor::matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = 2.0 * kPi * rng.uniform();
    const double r = spec.radius + spec.noise_std * rng.normal();
    d.xs.at(i, 0) = clamp_unit(r * std::cos(phi));
    d.xs.at(i, 1) = clamp_unit(r * std::sin(phi));
  }
  return d;
}

Dataset make_two_spirals(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  Dataset d;
  d.xs = Tensor::matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform();
    const double branch = (rng.uniform() < 0.5) ? 0.0 : 1.0;
    const double phi = 3.0 * kPi * t + kPi * branch;
    const double r = 0.05 + 0.85 * t;
    d.xs.at(i, 0) = clamp_unit(r * std::cos(phi) + spec.noise_std * rng.normal());
    d.xs.at(i, 1) = clamp_unit(r * std::sin(phi) + spec.noise_std * rng.normal());
  }
  return d;
}

Dataset make_checkerboard(const DatasetSpec&, std::size_t n, Rng& rng) {
  // 4x4 board over [-1,1]^2; the 8 cells with even (i+j) carry the mass.
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if ((i + j) % 2 == 0) cells.emplace_back(i, j);
  Dataset d;
  d.xs = Tensor::matrix(n, 2);
  for (std::size_t s = 0; s < n; ++s) {
    const auto [ci, cj] = cells[pick_index(rng, cells.size())];
    d.xs.at(s, 0) = -1.0 + 0.5 * (static_cast<double>(ci) + rng.uniform());
    d.xs.at(s, 1) = -1.0 + 0.5 * (static_cast<double>(cj) + rng.uniform());
  }
  return d;
}

Dataset make_patches(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(spec.patch_dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path().string());
  }
  if (ec) throw IoError("cannot read patch directory: " + spec.patch_dir);
  std::sort(files.begin(), files.end());
  std::vector<GrayImage> imgs;
  for (const auto& f : files) {
    GrayImage img = read_pgm(f);
    if (img.w >= spec.patch && img.h >= spec.patch) imgs.push_back(std::move(img));
  }
  if (imgs.empty())
    throw IoError("no PGM files of at least patch size in: " + spec.patch_dir);
  const std::size_t p = spec.patch;
  Dataset d;
  d.xs = Tensor::matrix(n, p * p);
  for (std::size_t s = 0; s < n; ++s) {
    const GrayImage& img = imgs[pick_index(rng, imgs.size())];
    const std::size_t top = pick_index(rng, img.h - p + 1);
    const std::size_t left = pick_index(rng, img.w - p + 1);
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c)
        d.xs.at(s, r * p + c) =
            static_cast<double>(img.at(top + r, left + c)) / 127.5 - 1.0;
  }
  return d;
}

}  // namespace

std::size_t dataset_dim(const DatasetSpec& spec) {
  if (spec.kind == "patches") return spec.patch * spec.patch;
  return 2;
}

void validate_dataset_spec(const DatasetSpec& spec) {
  const bool known = spec.kind == "gaussian_grid" || spec.kind == "ring" ||
                     spec.kind == "two_spirals" || spec.kind == "checkerboard" ||
                     spec.kind == "patches";
  if (!known) throw ConfigError("unknown dataset.kind: " + spec.kind);
  if (spec.n == 0) throw ConfigError("dataset.n must be >= 1");
  if (spec.kind == "gaussian_grid") {
    if (spec.kx == 0 || spec.ky == 0) throw ConfigError("dataset.kx/ky must be >= 1");
    if (!(spec.mode_std > 0.0)) throw ConfigError("dataset.mode_std must be > 0");
    if (!(spec.span > 0.0) || spec.span > 1.0)
      throw ConfigError("dataset.span must be in (0, 1]");
  }
  if (spec.kind == "ring" && !(spec.radius > 0.0 && spec.radius <= 1.0))
    throw ConfigError("dataset.radius must be in (0, 1]");
  if ((spec.kind == "ring" || spec.kind == "two_spirals") && spec.noise_std < 0.0)
    throw ConfigError("dataset.noise_std must be >= 0");
  if (spec.kind == "patches") {
    if (spec.patch < 2) throw ConfigError("dataset.patch must be >= 2");
    if (spec.patch_dir.empty()) throw ConfigError("dataset.patch_dir is required for patches");
  }
}

Tensor gaussian_grid_centers(std::size_t kx, std::size_t ky, double span) {
  Tensor centers = Tensor::matrix(kx * ky, 2);
  std::size_t m = 0;
  for (std::size_t i = 0; i < kx; ++i)
    for (std::size_t j = 0; j < ky; ++j, ++m) {
      centers.at(m, 0) =
          kx == 1 ? 0.0
                  : -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(kx - 1);
      centers.at(m, 1) =
          ky == 1 ? 0.0
                  : -span + 2.0 * span * static_cast<double>(j) / static_cast<double>(ky - 1);
    }
  return centers;
}

Dataset dataset_generate(const DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  validate_dataset_spec(spec);
  if (n == 0) throw ConfigError("dataset sample count must be >= 1");
  Rng rng(derive_seed(seed, kStreamDataset));
  if (spec.kind == "gaussian_grid") return make_gaussian_grid(spec, n, rng);
  if (spec.kind == "ring") return make_ring(spec, n, rng);
  if (spec.kind == "two_spirals") return make_two_spirals(spec, n, rng);
  if (spec.kind == "checkerboard") return make_checkerboard(spec, n, rng);
  return make_patches(spec, n, rng);
}

}  // namespace ebmvae
