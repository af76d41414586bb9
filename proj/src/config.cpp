#include "ebmvae/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ebmvae/errors.hpp"
#include "ebmvae/net.hpp"

namespace ebmvae {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects a number, got '" + v + "'", line);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects a non-negative integer, got '" + v + "'", line);
  }
}

bool parse_bool(const std::string& key, const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + " expects true or false, got '" + v + "'", line);
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v,
                                         int line) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ','))
    out.push_back(static_cast<std::size_t>(parse_u64(key, trim(part), line)));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

// Returns false when (section, key) is unknown; value errors throw.
bool set_key(RunConfig& c, const std::string& sec, const std::string& key,
             const std::string& v, int line) {
  const std::string full = sec + "." + key;
  if (sec == "run") {
    if (key == "name") return c.name = v, true;
    if (key == "out_dir") return c.out_dir = v, true;
    if (key == "seed") return c.train.seed = parse_u64(full, v, line), true;
    if (key == "precision") return c.precision = v, true;
    return false;
  }
  if (sec == "dataset") {
    DatasetSpec& d = c.dataset;
    if (key == "kind") return d.kind = v, true;
    if (key == "n") return d.n = parse_u64(full, v, line), true;
    if (key == "k") {  // square shorthand: k x k modes
      d.kx = d.ky = parse_u64(full, v, line);
      return true;
    }
    if (key == "kx") return d.kx = parse_u64(full, v, line), true;
    if (key == "ky") return d.ky = parse_u64(full, v, line), true;
    if (key == "mode_std") return d.mode_std = parse_double(full, v, line), true;
    if (key == "span") return d.span = parse_double(full, v, line), true;
    if (key == "radius") return d.radius = parse_double(full, v, line), true;
    if (key == "noise_std") return d.noise_std = parse_double(full, v, line), true;
    if (key == "patch_dir") return d.patch_dir = v, true;
    if (key == "patch") return d.patch = parse_u64(full, v, line), true;
    return false;
  }
  if (sec == "model") {
    if (key == "latent_dim") return c.latent_dim = parse_u64(full, v, line), true;
    if (key == "energy_hidden") return c.energy_hidden = parse_size_list(full, v, line), true;
    if (key == "gen_hidden") return c.gen_hidden = parse_size_list(full, v, line), true;
    if (key == "enc_hidden") return c.enc_hidden = parse_size_list(full, v, line), true;
    if (key == "sigma") return c.sigma = parse_double(full, v, line), true;
    if (key == "energy_act") return c.energy_act = v, true;
    if (key == "gen_out_act") return c.gen_out_act = v, true;
    return false;
  }
  if (sec == "langevin") {
    SamplerConfig& s = c.train.sampler;
    if (key == "steps") {
      s.steps = static_cast<int>(parse_u64(full, v, line));
      return true;
    }
    if (key == "step_size") return s.step_size = parse_double(full, v, line), true;
    if (key == "noise") return s.noise_enabled = parse_bool(full, v, line), true;
    if (key == "clamp") return s.clamp_enabled = parse_bool(full, v, line), true;
    if (key == "clamp_lo") return s.clamp_lo = parse_double(full, v, line), true;
    if (key == "clamp_hi") return s.clamp_hi = parse_double(full, v, line), true;
    return false;
  }
  if (sec == "train") {
    TrainConfig& t = c.train;
    if (key == "iterations") return t.iterations = parse_u64(full, v, line), true;
    if (key == "data_batch") return t.data_batch = parse_u64(full, v, line), true;
    if (key == "synth_batch") return t.synth_batch = parse_u64(full, v, line), true;
    if (key == "gamma") return t.gamma = parse_double(full, v, line), true;
    if (key == "lr_theta") return t.adam_theta.lr = parse_double(full, v, line), true;
    if (key == "lr_alpha") return t.adam_alpha.lr = parse_double(full, v, line), true;
    if (key == "lr_beta") return t.adam_beta.lr = parse_double(full, v, line), true;
    if (key == "beta1") {
      t.adam_theta.beta1 = t.adam_alpha.beta1 = t.adam_beta.beta1 =
          parse_double(full, v, line);
      return true;
    }
    if (key == "beta2") {
      t.adam_theta.beta2 = t.adam_alpha.beta2 = t.adam_beta.beta2 =
          parse_double(full, v, line);
      return true;
    }
    if (key == "weight_decay_theta")
      return t.weight_decay_theta = parse_double(full, v, line), true;
    if (key == "eval_every") return t.eval_every = parse_u64(full, v, line), true;
    if (key == "checkpoint_every") return t.checkpoint_every = parse_u64(full, v, line), true;
    return false;
  }
  if (sec == "grid") {
    GridSpec& g = c.grid;
    if (key == "dims") return g.dims = parse_u64(full, v, line), true;
    if (key == "lo_x") return g.lo[0] = parse_double(full, v, line), true;
    if (key == "hi_x") return g.hi[0] = parse_double(full, v, line), true;
    if (key == "lo_y") return g.lo[1] = parse_double(full, v, line), true;
    if (key == "hi_y") return g.hi[1] = parse_double(full, v, line), true;
    if (key == "res_x") return g.res[0] = parse_u64(full, v, line), true;
    if (key == "res_y") return g.res[1] = parse_u64(full, v, line), true;
    return false;
  }
  if (sec == "cond") {
    if (key == "y_dim") return c.cond_y_dim = parse_u64(full, v, line), true;
    return false;
  }
  throw ConfigError("unknown config section [" + sec + "]", line);
}

}  // namespace

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> keys = {
      {"run", "name", "experiment name; also the run directory name"},
      {"run", "out_dir", "output root (default: $EBMVAE_OUT or 'runs')"},
      {"run", "seed", "master seed; all randomness derives from it"},
      {"run", "precision", "floating point mode; this build supports f64"},
      {"dataset", "kind", "gaussian_grid | ring | two_spirals | checkerboard | patches"},
      {"dataset", "n", "training sample count"},
      {"dataset", "k", "gaussian_grid: square mode count shorthand (k x k)"},
      {"dataset", "kx", "gaussian_grid: modes along x"},
      {"dataset", "ky", "gaussian_grid: modes along y"},
      {"dataset", "mode_std", "gaussian_grid: per-mode standard deviation"},
      {"dataset", "span", "gaussian_grid: centers span [-span, span]"},
      {"dataset", "radius", "ring: radius"},
      {"dataset", "noise_std", "ring/two_spirals: additive noise std"},
      {"dataset", "patch_dir", "patches: directory of PGM images"},
      {"dataset", "patch", "patches: patch side length"},
      {"model", "latent_dim", "latent dimension d (0: min(200, data dim))"},
      {"model", "energy_hidden", "energy net hidden widths, comma separated"},
      {"model", "gen_hidden", "generator hidden widths"},
      {"model", "enc_hidden", "encoder hidden widths"},
      {"model", "sigma", "generator observation noise std"},
      {"model", "energy_act", "energy hidden activation: relu | tanh"},
      {"model", "gen_out_act", "generator output activation: tanh | linear"},
      {"langevin", "steps", "revision steps l"},
      {"langevin", "step_size", "step size delta (drift delta^2/2, noise std delta)"},
      {"langevin", "noise", "inject noise (false: gradient descent on U)"},
      {"langevin", "clamp", "clamp chain states to [clamp_lo, clamp_hi]"},
      {"langevin", "clamp_lo", "lower clamp bound"},
      {"langevin", "clamp_hi", "upper clamp bound"},
      {"train", "iterations", "training iterations"},
      {"train", "data_batch", "observed-data batch size n"},
      {"train", "synth_batch", "synthesized-chain batch size"},
      {"train", "gamma", "weight on the KL-to-prior term"},
      {"train", "lr_theta", "energy learning rate"},
      {"train", "lr_alpha", "generator learning rate"},
      {"train", "lr_beta", "encoder learning rate"},
      {"train", "beta1", "Adam beta1 (all three optimizers)"},
      {"train", "beta2", "Adam beta2 (all three optimizers)"},
      {"train", "weight_decay_theta", "L2 coefficient on energy parameters"},
      {"train", "eval_every", "metrics cadence in iterations"},
      {"train", "checkpoint_every", "checkpoint cadence (0: final only)"},
      {"grid", "dims", "evaluation grid dimensionality (1 or 2)"},
      {"grid", "lo_x", "grid lower bound, axis 0"},
      {"grid", "hi_x", "grid upper bound, axis 0"},
      {"grid", "lo_y", "grid lower bound, axis 1"},
      {"grid", "hi_y", "grid upper bound, axis 1"},
      {"grid", "res_x", "cells along axis 0"},
      {"grid", "res_y", "cells along axis 1"},
      {"cond", "y_dim", "conditional runs: leading columns used as the condition"},
  };
  return keys;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    std::string s = raw;
    const std::size_t hash = s.find_first_of("#;");
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("unterminated section header", line);
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw ConfigError("empty section header", line);
      static const char* known[] = {"run", "dataset", "model", "langevin",
                                    "train", "grid", "cond"};
      bool ok = false;
      for (const char* k : known) ok = ok || section == k;
      if (!ok) throw ConfigError("unknown config section [" + section + "]", line);
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line);
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line);
    if (section.empty()) throw ConfigError("key outside any [section]", line);
    if (!set_key(cfg, section, key, value, line))
      throw ConfigError("unknown config key " + section + "." + key, line);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n";
  o << "name = " << c.name << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "seed = " << c.train.seed << "\n";
  o << "precision = " << c.precision << "\n";
  o << "\n[dataset]\n";
  o << "kind = " << c.dataset.kind << "\n";
  o << "n = " << c.dataset.n << "\n";
  o << "kx = " << c.dataset.kx << "\n";
  o << "ky = " << c.dataset.ky << "\n";
  o << "mode_std = " << fmt_double(c.dataset.mode_std) << "\n";
  o << "span = " << fmt_double(c.dataset.span) << "\n";
  o << "radius = " << fmt_double(c.dataset.radius) << "\n";
  o << "noise_std = " << fmt_double(c.dataset.noise_std) << "\n";
  o << "patch_dir = " << c.dataset.patch_dir << "\n";
  o << "patch = " << c.dataset.patch << "\n";
  o << "\n[model]\n";
  o << "latent_dim = " << c.latent_dim << "\n";
  o << "energy_hidden = " << fmt_size_list(c.energy_hidden) << "\n";
  o << "gen_hidden = " << fmt_size_list(c.gen_hidden) << "\n";
  o << "enc_hidden = " << fmt_size_list(c.enc_hidden) << "\n";
  o << "sigma = " << fmt_double(c.sigma) << "\n";
  o << "energy_act = " << c.energy_act << "\n";
  o << "gen_out_act = " << c.gen_out_act << "\n";
  o << "\n[langevin]\n";
  o << "steps = " << c.train.sampler.steps << "\n";
  o << "step_size = " << fmt_double(c.train.sampler.step_size) << "\n";
  o << "noise = " << (c.train.sampler.noise_enabled ? "true" : "false") << "\n";
  o << "clamp = " << (c.train.sampler.clamp_enabled ? "true" : "false") << "\n";
  o << "clamp_lo = " << fmt_double(c.train.sampler.clamp_lo) << "\n";
  o << "clamp_hi = " << fmt_double(c.train.sampler.clamp_hi) << "\n";
  o << "\n[train]\n";
  o << "iterations = " << c.train.iterations << "\n";
  o << "data_batch = " << c.train.data_batch << "\n";
  o << "synth_batch = " << c.train.synth_batch << "\n";
  o << "gamma = " << fmt_double(c.train.gamma) << "\n";
  o << "lr_theta = " << fmt_double(c.train.adam_theta.lr) << "\n";
  o << "lr_alpha = " << fmt_double(c.train.adam_alpha.lr) << "\n";
  o << "lr_beta = " << fmt_double(c.train.adam_beta.lr) << "\n";
  o << "beta1 = " << fmt_double(c.train.adam_theta.beta1) << "\n";
  o << "beta2 = " << fmt_double(c.train.adam_theta.beta2) << "\n";
  o << "weight_decay_theta = " << fmt_double(c.train.weight_decay_theta) << "\n";
  o << "eval_every = " << c.train.eval_every << "\n";
  o << "checkpoint_every = " << c.train.checkpoint_every << "\n";
  o << "\n[grid]\n";
  o << "dims = " << c.grid.dims << "\n";
  o << "lo_x = " << fmt_double(c.grid.lo[0]) << "\n";
  o << "hi_x = " << fmt_double(c.grid.hi[0]) << "\n";
  o << "lo_y = " << fmt_double(c.grid.lo[1]) << "\n";
  o << "hi_y = " << fmt_double(c.grid.hi[1]) << "\n";
  o << "res_x = " << c.grid.res[0] << "\n";
  o << "res_y = " << c.grid.res[1] << "\n";
  o << "\n[cond]\n";
  o << "y_dim = " << c.cond_y_dim << "\n";
  return o.str();
}

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const std::size_t dot = dotted_key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size())
    throw ConfigError("override key must look like section.key: " + dotted_key);
  const std::string sec = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  if (!set_key(cfg, sec, key, trim(value), -1))
    throw ConfigError("unknown config key " + dotted_key);
}

void validate_config(const RunConfig& c) {
  if (c.name.empty() || c.name.find('/') != std::string::npos ||
      c.name.find('\\') != std::string::npos)
    throw ConfigError("run.name must be a non-empty path-safe token");
  if (c.precision == "f32")
    throw ConfigError("run.precision: f32 is not supported in this build; use f64");
  if (c.precision != "f64")
    throw ConfigError("run.precision: unknown mode '" + c.precision + "'");
  validate_dataset_spec(c.dataset);
  if (!(c.sigma > 0.0)) throw ConfigError("model.sigma must be > 0");
  for (const auto* hidden : {&c.energy_hidden, &c.gen_hidden, &c.enc_hidden})
    for (std::size_t wdt : *hidden)
      if (wdt == 0) throw ConfigError("model hidden widths must be >= 1");
  if (c.energy_act != "relu" && c.energy_act != "tanh")
    throw ConfigError("model.energy_act must be relu or tanh");
  if (c.gen_out_act != "tanh" && c.gen_out_act != "linear")
    throw ConfigError("model.gen_out_act must be tanh or linear");
  const SamplerConfig& s = c.train.sampler;
  if (!(s.step_size > 0.0)) throw ConfigError("langevin.step_size must be > 0");
  if (s.steps < 0 || s.steps > 1000000) throw ConfigError("langevin.steps out of range");
  if (s.clamp_enabled && !(s.clamp_lo < s.clamp_hi))
    throw ConfigError("langevin.clamp_lo must be < langevin.clamp_hi");
  const TrainConfig& t = c.train;
  if (t.iterations == 0) throw ConfigError("train.iterations must be >= 1");
  if (t.data_batch == 0 || t.synth_batch == 0)
    throw ConfigError("train batch sizes must be >= 1");
  if (t.gamma < 0.0) throw ConfigError("train.gamma must be >= 0");
  for (const auto* a : {&t.adam_theta, &t.adam_alpha, &t.adam_beta}) {
    if (!(a->lr > 0.0)) throw ConfigError("train learning rates must be > 0");
    if (a->beta1 < 0.0 || a->beta1 >= 1.0 || a->beta2 < 0.0 || a->beta2 >= 1.0)
      throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
  }
  if (t.weight_decay_theta < 0.0)
    throw ConfigError("train.weight_decay_theta must be >= 0");
  if (t.eval_every == 0) throw ConfigError("train.eval_every must be >= 1");
  try {
    c.grid.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (c.cond_y_dim == 0) throw ConfigError("cond.y_dim must be >= 1");
  if (c.cond_y_dim >= dataset_dim(c.dataset))
    throw ConfigError("cond.y_dim must be smaller than the data dimension");
}

std::size_t resolved_latent_dim(const RunConfig& c) {
  if (c.latent_dim != 0) return c.latent_dim;
  return std::min<std::size_t>(200, dataset_dim(c.dataset));
}

std::string resolved_out_root(const RunConfig& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  const char* env = std::getenv("EBMVAE_OUT");
  if (env != nullptr && env[0] != '\0') return env;
  return "runs";
}

}  // namespace ebmvae
