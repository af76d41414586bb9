#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebmvae/diagnostics.hpp"
#include "ebmvae/images.hpp"
#include "ebmvae/models.hpp"
#include "ebmvae/tensor.hpp"

namespace ebmvae {

// Figure emission without plotting dependencies: scatter panels and strips as
// binary PPM/PGM plus CSV point sets readable by read_points_csv.

struct ScatterGroup {
  const Tensor* pts;  // [N, 2]
  std::uint8_t r, g, b;
};

// px-by-px panel over the grid bounds; points are 3x3 dots, later groups draw
// on top, off-grid points are skipped.
RgbImage render_scatter(const std::vector<ScatterGroup>& groups, const GridSpec& bounds,
                        std::size_t px);

// Normalized density exp(-U)/Z on the grid, scaled so the highest cell is
// white-on-black 255. Row 0 is the top of the y axis.
GrayImage render_energy_heatmap(const EnergyModel& m, const GridSpec& grid);

// Horizontal concatenation with a black separator column between panels;
// panels must share a height.
RgbImage hstack(const std::vector<RgbImage>& panels, std::size_t sep);
GrayImage hstack_gray(const std::vector<GrayImage>& panels, std::size_t sep);

// Map one rank-1 example in [-1, 1]^(side*side) onto a grayscale tile.
GrayImage example_tile(const Tensor& row, std::size_t side);

void write_points_csv(const std::string& path, const Tensor& pts);
Tensor read_points_csv(const std::string& path);

struct FigureSet {
  std::vector<std::string> paths;
};

// Emits, under `dir`: point CSVs for data / initial / revised batches; for 2-D
// data also overlay and per-batch scatters, the energy heatmap, a Langevin
// frame strip, and a latent interpolation strip; for square image data the
// strips render as grayscale tiles instead. Returns every path written.
FigureSet emit_figures(const std::string& dir, const EnergyModel& m,
                       const GeneratorModel& g, const Tensor& data, const Tensor& x_hat,
                       const Tensor& x_tilde, const std::vector<Tensor>& frames,
                       const GridSpec& grid, std::uint64_t seed);

}  // namespace ebmvae
