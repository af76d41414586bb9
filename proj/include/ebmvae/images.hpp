#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ebmvae {

// Minimal binary PGM (P5) and PPM (P6) support, maxval 255. These are the
// only image formats the project reads or writes.

struct GrayImage {
  std::size_t w = 0, h = 0;
  std::vector<std::uint8_t> px;  // row-major, h*w

  std::uint8_t at(std::size_t row, std::size_t col) const { return px[row * w + col]; }
  std::uint8_t& at(std::size_t row, std::size_t col) { return px[row * w + col]; }
};

struct RgbImage {
  std::size_t w = 0, h = 0;
  std::vector<std::uint8_t> px;  // row-major, 3*h*w

  void set(std::size_t row, std::size_t col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const std::size_t i = 3 * (row * w + col);
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }
};

GrayImage make_gray(std::size_t w, std::size_t h, std::uint8_t fill = 255);
RgbImage make_rgb(std::size_t w, std::size_t h, std::uint8_t fill = 255);

void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

}  // namespace ebmvae
