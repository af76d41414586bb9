#include "ebmvae/images.hpp"

#include <cctype>
#include <fstream>

#include "ebmvae/errors.hpp"

namespace ebmvae {

namespace {

// Whitespace and '#'-comment skipping between PNM header tokens.
void skip_pnm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_pnm_number(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  long long v = -1;
  in >> v;
  if (!in || v < 0) throw IoError("malformed image header: " + path);
  return static_cast<std::size_t>(v);
}

std::vector<std::uint8_t> read_pnm_payload(std::istream& in, std::size_t n,
                                           const std::string& path) {
  // Exactly one whitespace byte separates the header from the raster.
  in.get();
  std::vector<std::uint8_t> px(n);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw IoError("truncated image payload: " + path);
  return px;
}

void check_dims(std::size_t w, std::size_t h, const std::string& path) {
  if (w == 0 || h == 0 || w > 1u << 20 || h > 1u << 20)
    throw IoError("unreasonable image dimensions: " + path);
}

}  // namespace

GrayImage make_gray(std::size_t w, std::size_t h, std::uint8_t fill) {
  GrayImage img;
  img.w = w;
  img.h = h;
  img.px.assign(w * h, fill);
  return img;
}

RgbImage make_rgb(std::size_t w, std::size_t h, std::uint8_t fill) {
  RgbImage img;
  img.w = w;
  img.h = h;
  img.px.assign(3 * w * h, fill);
  return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  if (img.px.size() != img.w * img.h) throw UsageError("image buffer does not match dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size()));
  if (!out) throw IoError("write failed: " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0).get(m1);
  if (m0 != 'P' || m1 != '5') throw IoError("not a binary PGM (P5): " + path);
  GrayImage img;
  img.w = read_pnm_number(in, path);
  img.h = read_pnm_number(in, path);
  check_dims(img.w, img.h, path);
  if (read_pnm_number(in, path) != 255) throw IoError("only maxval 255 supported: " + path);
  img.px = read_pnm_payload(in, img.w * img.h, path);
  return img;
}

void write_ppm(const std::string& path, const RgbImage& img) {
  if (img.px.size() != 3 * img.w * img.h) throw UsageError("image buffer does not match dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size()));
  if (!out) throw IoError("write failed: " + path);
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0).get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("not a binary PPM (P6): " + path);
  RgbImage img;
  img.w = read_pnm_number(in, path);
  img.h = read_pnm_number(in, path);
  check_dims(img.w, img.h, path);
  if (read_pnm_number(in, path) != 255) throw IoError("only maxval 255 supported: " + path);
  img.px = read_pnm_payload(in, 3 * img.w * img.h, path);
  return img;
}

}  // namespace ebmvae
