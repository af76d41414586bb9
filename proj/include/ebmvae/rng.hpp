#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ebmvae {

// splitmix64 step; used to derive independent stream seeds from (seed, tags).
std::uint64_t mix64(std::uint64_t x);

// Derive a stream seed from a master seed plus up to three tags (iteration
// index, chain index, purpose code...). Pure function, so any draw made at
// iteration t can be reproduced from (seed, t) alone without replaying t-1
// iterations. Checkpoint resume leans on this.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

// mt19937_64 with an explicitly managed normal cache. std::normal_distribution
// keeps hidden state that differs across standard libraries; Box-Muller with a
// visible spare keeps the full RNG state serializable and portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // N(0, 1)
  void fill_normal(double* dst, std::size_t n);

  // Textual state round-trip (engine stream + spare cache); bitwise exact.
  std::string save_state() const;
  void load_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ebmvae
