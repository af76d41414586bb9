#include "ebmvae/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ebmvae/errors.hpp"

namespace ebmvae {

namespace {

constexpr char kMagic[] = "EBMVAE-CKPT";

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t double_bits(double d) {
  std::uint64_t u = 0;
  std::memcpy(&u, &d, sizeof(u));
  return u;
}

double bits_double(std::uint64_t u) {
  double d = 0.0;
  std::memcpy(&d, &u, sizeof(d));
  return d;
}

std::string encode_array(const std::vector<double>& a) {
  std::string out;
  out.reserve(8 * a.size());
  for (double d : a) put_u64_le(out, double_bits(d));
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Cursor-based reader over the full file contents.
struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;

  std::string line() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw IoError("checkpoint: truncated header");
    std::string s = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return s;
  }
  std::string raw(std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("checkpoint: truncated payload");
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void expect(char c) {
    if (pos >= bytes.size() || bytes[pos] != c)
      throw IoError("checkpoint: malformed payload framing");
    ++pos;
  }
};

std::uint64_t parse_u64_field(const std::string& line, const std::string& name) {
  std::istringstream ss(line);
  std::string label;
  unsigned long long v = 0;
  ss >> label >> v;
  if (!ss || label != name) throw IoError("checkpoint: expected '" + name + "' header line");
  return v;
}

}  // namespace

const std::vector<double>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, a] : arrays)
    if (n == name) return &a;
  return nullptr;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ostringstream out;
  out << kMagic << " " << c.version << "\n";
  out << "iter " << c.iter << "\n";
  out << "seed " << c.seed << "\n";
  out << "config " << c.config_text.size() << "\n" << c.config_text << "\n";
  out << "arrays " << c.arrays.size() << "\n";
  for (const auto& [name, values] : c.arrays) {
    const std::string payload = encode_array(values);
    out << "array " << name << " " << values.size() << " "
        << hex64(fnv1a64(payload.data(), payload.size())) << "\n";
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out << "\n";
  }
  out << "end\n";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  const std::string s = out.str();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  Reader r{bytes};

  Checkpoint c;
  {
    std::istringstream ss(r.line());
    std::string magic;
    unsigned long long version = 0;
    ss >> magic >> version;
    if (!ss || magic != kMagic) throw IoError("checkpoint: bad magic in " + path);
    if (version != 1)
      throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    c.version = version;
  }
  c.iter = parse_u64_field(r.line(), "iter");
  c.seed = parse_u64_field(r.line(), "seed");
  const std::uint64_t cfg_len = parse_u64_field(r.line(), "config");
  c.config_text = r.raw(cfg_len);
  r.expect('\n');
  const std::uint64_t count = parse_u64_field(r.line(), "arrays");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::istringstream ss(r.line());
    std::string label, name, want_hex;
    unsigned long long len = 0;
    ss >> label >> name >> len >> want_hex;
    if (!ss || label != "array") throw IoError("checkpoint: malformed array header");
    const std::string payload = r.raw(8 * len);
    r.expect('\n');
    if (hex64(fnv1a64(payload.data(), payload.size())) != want_hex)
      throw IoError("checkpoint: checksum mismatch in array '" + name + "'");
    std::vector<double> values(len);
    for (std::size_t j = 0; j < len; ++j) {
      std::uint64_t u = 0;
      for (int b = 7; b >= 0; --b)
        u = (u << 8) | static_cast<unsigned char>(payload[8 * j + static_cast<std::size_t>(b)]);
      values[j] = bits_double(u);
    }
    c.arrays.emplace_back(name, std::move(values));
  }
  if (r.line() != "end") throw IoError("checkpoint: missing end marker");
  return c;
}

namespace {

void push_optimizer(Checkpoint& c, const std::string& prefix, const AdamState& s) {
  c.arrays.emplace_back(prefix + ".m", s.m().flatten());
  c.arrays.emplace_back(prefix + ".v", s.v().flatten());
  c.arrays.emplace_back(prefix + ".t",
                        std::vector<double>{static_cast<double>(s.step_count())});
}

void pull_optimizer(const Checkpoint& c, const std::string& prefix, AdamState& s,
                    const ParamStore& params) {
  const auto* m = c.find(prefix + ".m");
  const auto* v = c.find(prefix + ".v");
  const auto* t = c.find(prefix + ".t");
  if (m == nullptr || v == nullptr || t == nullptr || t->size() != 1)
    throw IoError("checkpoint: missing optimizer arrays for " + prefix);
  s = AdamState(params);  // establishes the layout before unflattening
  s.m().unflatten(*m);
  s.v().unflatten(*v);
  s.set_step_count(static_cast<long>((*t)[0]));
}

void pull_params(const Checkpoint& c, const std::string& name, ParamStore& params) {
  const auto* a = c.find(name);
  if (a == nullptr) throw IoError("checkpoint: missing parameter array '" + name + "'");
  params.unflatten(*a);
}

}  // namespace

Checkpoint make_checkpoint_stores(std::uint64_t iter, std::uint64_t seed,
                                  std::string config_text, const ParamStore& theta,
                                  const ParamStore& alpha, const ParamStore& beta,
                                  const AdamState& opt_theta, const AdamState& opt_alpha,
                                  const AdamState& opt_beta) {
  Checkpoint c;
  c.iter = iter;
  c.seed = seed;
  c.config_text = std::move(config_text);
  c.arrays.emplace_back("theta", theta.flatten());
  c.arrays.emplace_back("alpha", alpha.flatten());
  c.arrays.emplace_back("beta", beta.flatten());
  push_optimizer(c, "adam_theta", opt_theta);
  push_optimizer(c, "adam_alpha", opt_alpha);
  push_optimizer(c, "adam_beta", opt_beta);
  return c;
}

void restore_checkpoint_stores(const Checkpoint& c, ParamStore& theta, ParamStore& alpha,
                               ParamStore& beta, AdamState& opt_theta,
                               AdamState& opt_alpha, AdamState& opt_beta) {
  pull_params(c, "theta", theta);
  pull_params(c, "alpha", alpha);
  pull_params(c, "beta", beta);
  pull_optimizer(c, "adam_theta", opt_theta, theta);
  pull_optimizer(c, "adam_alpha", opt_alpha, alpha);
  pull_optimizer(c, "adam_beta", opt_beta, beta);
}

Checkpoint make_checkpoint(std::uint64_t iter, std::uint64_t seed, std::string config_text,
                           const EnergyModel& m, const GeneratorModel& g,
                           const InferenceModel& e, const AdamState& opt_theta,
                           const AdamState& opt_alpha, const AdamState& opt_beta) {
  return make_checkpoint_stores(iter, seed, std::move(config_text), m.params(), g.params(),
                                e.params(), opt_theta, opt_alpha, opt_beta);
}

void restore_checkpoint(const Checkpoint& c, EnergyModel& m, GeneratorModel& g,
                        InferenceModel& e, AdamState& opt_theta, AdamState& opt_alpha,
                        AdamState& opt_beta) {
  restore_checkpoint_stores(c, m.params(), g.params(), e.params(), opt_theta, opt_alpha,
                            opt_beta);
}

}  // namespace ebmvae
