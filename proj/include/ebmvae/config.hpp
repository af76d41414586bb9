#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebmvae/datasets.hpp"
#include "ebmvae/diagnostics.hpp"
#include "ebmvae/training.hpp"

namespace ebmvae {

// Full experiment description. Plain-text config files use line-oriented
// `key = value` entries under [section] headers; CLI flags override any key
// one-for-one as --section.key. The grammar is documented in the README.
struct RunConfig {
  // [run]
  std::string name = "run";
  std::string out_dir;  // empty: $EBMVAE_OUT or "runs"
  std::string precision = "f64";

  // [dataset]
  DatasetSpec dataset;

  // [model]
  std::size_t latent_dim = 0;  // 0: min(200, data dim)
  std::vector<std::size_t> energy_hidden{64, 64};
  std::vector<std::size_t> gen_hidden{64, 64};
  std::vector<std::size_t> enc_hidden{64, 64};
  double sigma = 0.3;
  std::string energy_act = "relu";
  std::string gen_out_act = "tanh";

  // [langevin] lives in train.sampler; [train] in train (seed under [run]).
  TrainConfig train;

  // [grid]
  GridSpec grid;

  // [cond] conditional runs treat the first y_dim columns as the condition.
  std::size_t cond_y_dim = 1;
};

struct ConfigKeyInfo {
  const char* section;
  const char* key;
  const char* doc;
};

// Every recognized (section, key) pair; shared by the parser, the serializer,
// and CLI flag registration.
const std::vector<ConfigKeyInfo>& config_keys();

// Parse config text / file. Unknown sections or keys and malformed values
// raise ConfigError carrying the 1-based line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical full serialization; parse_config(serialize_config(c)) reproduces c
// exactly (serialize again to compare).
std::string serialize_config(const RunConfig& cfg);

// Set one key as "section.key"; same code path as the parser.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

// Semantic checks (positivity, known enums, grid sanity); errors name the key.
void validate_config(const RunConfig& cfg);

std::size_t resolved_latent_dim(const RunConfig& cfg);
std::string resolved_out_root(const RunConfig& cfg);

}  // namespace ebmvae
