#include "ebmvae/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "ebmvae/errors.hpp"

namespace ebmvae {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (a + 0x9e3779b97f4a7c15ull));
  h = mix64(h ^ (b + 0xd1b54a32d192ed03ull));
  h = mix64(h ^ (c + 0x8cb92ba72f3d8dd7ull));
  return h;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  // 53 random bits into [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method; rejection consumes a variable number of uniforms,
  // which is fine because the whole state (engine + spare) is serialized.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

void Rng::fill_normal(double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = normal();
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_ << " " << (has_spare_ ? 1 : 0) << " ";
  // The spare normal travels as raw bits; decimal round-trips of doubles are
  // easy to get subtly wrong and this state must restore bitwise.
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(spare_));
  std::memcpy(&bits, &spare_, sizeof(bits));
  os << bits;
  return os.str();
}

void Rng::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  int flag = 0;
  std::uint64_t bits = 0;
  is >> flag >> bits;
  if (is.fail()) throw IoError("rng state string is malformed");
  has_spare_ = (flag != 0);
  std::memcpy(&spare_, &bits, sizeof(bits));
}

}  // namespace ebmvae
