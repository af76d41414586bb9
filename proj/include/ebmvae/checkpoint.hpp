#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ebmvae/models.hpp"
#include "ebmvae/training.hpp"

namespace ebmvae {

// On-disk training state. Text header, then length-prefixed little-endian
// double arrays, each guarded by an FNV-1a 64 checksum; byte layout documented
// in docs/formats.md. Randomness is counter-based: (seed, iter) fully
// determines every stream, so the header's seed and iteration ARE the RNG
// state and resume is bit-reproducible.
struct Checkpoint {
  std::uint64_t version = 1;
  std::uint64_t iter = 0;  // completed iterations; resume starts here
  std::uint64_t seed = 0;
  std::string config_text;  // verbatim serialized RunConfig
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::vector<double>* find(const std::string& name) const;
};

std::uint64_t fnv1a64(const void* data, std::size_t n);

void save_checkpoint(const std::string& path, const Checkpoint& c);
// Throws IoError on version mismatch, truncation, or checksum failure.
Checkpoint load_checkpoint(const std::string& path);

// Capture / restore the full training state (three parameter stores plus the
// three Adam moment pairs and step counters). The store-level pair is the
// ground truth; the model-interface pair is sugar over it.
Checkpoint make_checkpoint_stores(std::uint64_t iter, std::uint64_t seed,
                                  std::string config_text, const ParamStore& theta,
                                  const ParamStore& alpha, const ParamStore& beta,
                                  const AdamState& opt_theta, const AdamState& opt_alpha,
                                  const AdamState& opt_beta);
void restore_checkpoint_stores(const Checkpoint& c, ParamStore& theta, ParamStore& alpha,
                               ParamStore& beta, AdamState& opt_theta,
                               AdamState& opt_alpha, AdamState& opt_beta);

Checkpoint make_checkpoint(std::uint64_t iter, std::uint64_t seed,
                           std::string config_text, const EnergyModel& m,
                           const GeneratorModel& g, const InferenceModel& e,
                           const AdamState& opt_theta, const AdamState& opt_alpha,
                           const AdamState& opt_beta);
void restore_checkpoint(const Checkpoint& c, EnergyModel& m, GeneratorModel& g,
                        InferenceModel& e, AdamState& opt_theta, AdamState& opt_alpha,
                        AdamState& opt_beta);

}  // namespace ebmvae
