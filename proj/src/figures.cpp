#include "ebmvae/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ebmvae/errors.hpp"
#include "ebmvae/metrics.hpp"
#include "ebmvae/rng.hpp"

namespace ebmvae {

namespace {

constexpr std::uint64_t kStreamFigureLatent = 401;

std::uint8_t unit_to_byte(double v) {
  const double s = std::round((std::min(1.0, std::max(-1.0, v)) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(s);
}

void draw_dot(RgbImage& img, long long row, long long col, std::uint8_t r,
              std::uint8_t g, std::uint8_t b) {
  for (long long dr = -1; dr <= 1; ++dr)
    for (long long dc = -1; dc <= 1; ++dc) {
      const long long rr = row + dr, cc = col + dc;
      if (rr < 0 || cc < 0 || rr >= static_cast<long long>(img.h) ||
          cc >= static_cast<long long>(img.w))
        continue;
      img.set(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc), r, g, b);
    }
}

std::vector<Tensor> subsample_frames(const std::vector<Tensor>& frames, std::size_t keep) {
  if (frames.size() <= keep) return frames;
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t idx = (i * (frames.size() - 1)) / (keep - 1);
    out.push_back(frames[idx]);
  }
  return out;
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

}  // namespace

RgbImage render_scatter(const std::vector<ScatterGroup>& groups, const GridSpec& bounds,
                        std::size_t px) {
  bounds.validate();
  if (bounds.dims != 2) throw UsageError("scatter panels need a 2-D grid");
  if (px < 16) throw UsageError("scatter panel too small");
  RgbImage img = make_rgb(px, px);
  const double sx = (bounds.hi[0] - bounds.lo[0]);
  const double sy = (bounds.hi[1] - bounds.lo[1]);
  for (const ScatterGroup& grp : groups) {
    const Tensor& pts = *grp.pts;
    if (pts.cols() != 2) throw UsageError("scatter points must be 2-D");
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      const double x = pts.at(i, 0), y = pts.at(i, 1);
      if (x < bounds.lo[0] || x > bounds.hi[0] || y < bounds.lo[1] || y > bounds.hi[1])
        continue;
      const auto col = static_cast<long long>(
          std::lround((x - bounds.lo[0]) / sx * static_cast<double>(px - 1)));
      const auto row = static_cast<long long>(
          std::lround((bounds.hi[1] - y) / sy * static_cast<double>(px - 1)));
      draw_dot(img, row, col, grp.r, grp.g, grp.b);
    }
  }
  return img;
}

GrayImage render_energy_heatmap(const EnergyModel& m, const GridSpec& grid) {
  const std::vector<double> cells = grid_cells_energy(m, grid);
  const double peak = *std::max_element(cells.begin(), cells.end());
  const std::size_t nx = grid.res[0];
  const std::size_t ny = grid.dims == 2 ? grid.res[1] : 1;
  const std::size_t rows = grid.dims == 2 ? ny : 64;  // stretch 1-D to a band
  GrayImage img = make_gray(nx, rows, 0);
  for (std::size_t ix = 0; ix < nx; ++ix)
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double mass = cells[grid.dims == 2 ? ix * ny + iy : ix];
      const auto v = static_cast<std::uint8_t>(std::lround(255.0 * mass / peak));
      if (grid.dims == 2) {
        img.at(ny - 1 - iy, ix) = v;
      } else {
        for (std::size_t r = 0; r < rows; ++r) img.at(r, ix) = v;
      }
    }
  return img;
}

RgbImage hstack(const std::vector<RgbImage>& panels, std::size_t sep) {
  if (panels.empty()) throw UsageError("hstack of nothing");
  const std::size_t h = panels.front().h;
  std::size_t w = 0;
  for (const auto& p : panels) {
    if (p.h != h) throw UsageError("hstack panels must share a height");
    w += p.w;
  }
  w += sep * (panels.size() - 1);
  RgbImage out = make_rgb(w, h, 0);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < p.w; ++c) {
        const std::size_t i = 3 * (r * p.w + c);
        out.set(r, x0 + c, p.px[i], p.px[i + 1], p.px[i + 2]);
      }
    x0 += p.w + sep;
  }
  return out;
}

GrayImage hstack_gray(const std::vector<GrayImage>& panels, std::size_t sep) {
  if (panels.empty()) throw UsageError("hstack of nothing");
  const std::size_t h = panels.front().h;
  std::size_t w = 0;
  for (const auto& p : panels) {
    if (p.h != h) throw UsageError("hstack panels must share a height");
    w += p.w;
  }
  w += sep * (panels.size() - 1);
  GrayImage out = make_gray(w, h, 0);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < p.w; ++c) out.at(r, x0 + c) = p.at(r, c);
    x0 += p.w + sep;
  }
  return out;
}

GrayImage example_tile(const Tensor& row, std::size_t side) {
  if (row.numel() != side * side) throw UsageError("example does not fill a square tile");
  GrayImage img = make_gray(side, side);
  for (std::size_t i = 0; i < side * side; ++i) img.px[i] = unit_to_byte(row[i]);
  return img;
}

void write_points_csv(const std::string& path, const Tensor& pts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t j = 0; j < pts.cols(); ++j) out << (j ? "," : "") << "x" << j;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    for (std::size_t j = 0; j < pts.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", pts.at(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

Tensor read_points_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  Tensor pts = Tensor::matrix(t.rows.size(), t.header.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      try {
        pts.at(i, j) = std::stod(t.rows[i][j]);
      } catch (const std::exception&) {
        throw IoError("non-numeric cell in " + path);
      }
    }
  return pts;
}

FigureSet emit_figures(const std::string& dir, const EnergyModel& m,
                       const GeneratorModel& g, const Tensor& data, const Tensor& x_hat,
                       const Tensor& x_tilde, const std::vector<Tensor>& frames,
                       const GridSpec& grid, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create figure directory: " + dir);
  FigureSet out;
  auto emit_csv = [&](const std::string& name, const Tensor& pts) {
    const std::string p = join(dir, name);
    write_points_csv(p, pts);
    out.paths.push_back(p);
  };
  emit_csv("scatter_data.csv", data);
  emit_csv("scatter_initial.csv", x_hat);
  emit_csv("scatter_revised.csv", x_tilde);

  const std::size_t d_data = data.cols();
  constexpr std::size_t kPanel = 220;
  if (d_data == 2 && grid.dims == 2) {
    const ScatterGroup gd{&data, 170, 170, 170};
    const ScatterGroup gi{&x_hat, 60, 90, 220};
    const ScatterGroup gr{&x_tilde, 220, 60, 40};
    auto emit_ppm = [&](const std::string& name, const RgbImage& img) {
      const std::string p = join(dir, name);
      write_ppm(p, img);
      out.paths.push_back(p);
    };
    emit_ppm("overlay.ppm", render_scatter({gd, gi, gr}, grid, 2 * kPanel));
    emit_ppm("scatter_initial.ppm", render_scatter({gi}, grid, kPanel));
    emit_ppm("scatter_revised.ppm", render_scatter({gr}, grid, kPanel));
    if (!frames.empty()) {
      std::vector<RgbImage> panels;
      for (const Tensor& f : subsample_frames(frames, 8))
        panels.push_back(render_scatter({ScatterGroup{&f, 220, 60, 40}}, grid, kPanel));
      emit_ppm("langevin_strip.ppm", hstack(panels, 2));
    }
    Rng rng(derive_seed(seed, kStreamFigureLatent));
    Tensor z_l({g.latent_dim()}, 0.0), z_r({g.latent_dim()}, 0.0);
    rng.fill_normal(z_l.data(), z_l.numel());
    rng.fill_normal(z_r.data(), z_r.numel());
    const Tensor path = latent_interpolate(g, z_l, z_r, 8);
    emit_csv("interpolation.csv", path);
    std::vector<RgbImage> panels;
    for (std::size_t k = 0; k < path.rows(); ++k) {
      const Tensor row = path.row_copy(k);
      Tensor one = Tensor::matrix(1, 2);
      one.at(0, 0) = row[0];
      one.at(0, 1) = row[1];
      panels.push_back(render_scatter({ScatterGroup{&one, 20, 140, 60}}, grid, kPanel));
    }
    emit_ppm("interpolation_strip.ppm", hstack(panels, 2));
  } else {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(double(d_data))));
    if (side * side == d_data && x_hat.rows() > 0) {
      auto emit_pgm = [&](const std::string& name, const GrayImage& img) {
        const std::string p = join(dir, name);
        write_pgm(p, img);
        out.paths.push_back(p);
      };
      if (!frames.empty()) {
        std::vector<GrayImage> tiles;
        for (const Tensor& f : subsample_frames(frames, 8))
          tiles.push_back(example_tile(f.row_copy(0), side));
        emit_pgm("langevin_strip.pgm", hstack_gray(tiles, 1));
      }
      Rng rng(derive_seed(seed, kStreamFigureLatent));
      Tensor z_l({g.latent_dim()}, 0.0), z_r({g.latent_dim()}, 0.0);
      rng.fill_normal(z_l.data(), z_l.numel());
      rng.fill_normal(z_r.data(), z_r.numel());
      const Tensor path = latent_interpolate(g, z_l, z_r, 8);
      emit_csv("interpolation.csv", path);
      std::vector<GrayImage> tiles;
      for (std::size_t k = 0; k < path.rows(); ++k)
        tiles.push_back(example_tile(path.row_copy(k), side));
      emit_pgm("interpolation_strip.pgm", hstack_gray(tiles, 1));
    }
  }
  if (m.dim() == grid.dims) {
    const std::string p = join(dir, "energy_heatmap.pgm");
    write_pgm(p, render_energy_heatmap(m, grid));
    out.paths.push_back(p);
  }
  return out;
}

}  // namespace ebmvae
