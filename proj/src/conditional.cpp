#include "ebmvae/conditional.hpp"

#include <cstring>

#include "ebmvae/errors.hpp"

namespace ebmvae {

Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ContractError("hconcat: row counts differ");
  const std::size_t B = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out = Tensor::matrix(B, ca + cb);
  for (std::size_t i = 0; i < B; ++i) {
    std::memcpy(out.row_ptr(i), a.row_ptr(i), ca * sizeof(double));
    std::memcpy(out.row_ptr(i) + ca, b.row_ptr(i), cb * sizeof(double));
  }
  return out;
}

CondEnergyNet::CondEnergyNet(std::size_t x_dim_, std::size_t y_dim_,
                             std::vector<std::size_t> hidden, std::uint64_t seed)
    : x_dim(x_dim_),
      y_dim(y_dim_),
      net(MlpSpec{x_dim_ + y_dim_, std::move(hidden), 1, Act::relu, Act::linear}, seed) {}

CondGeneratorNet::CondGeneratorNet(std::size_t latent_, std::size_t x_dim_,
                                   std::size_t y_dim_, std::vector<std::size_t> hidden,
                                   double sigma_, std::uint64_t seed, Act out_act)
    : latent(latent_),
      x_dim(x_dim_),
      y_dim(y_dim_),
      sigma(sigma_),
      net(MlpSpec{y_dim_ + latent_, std::move(hidden), x_dim_, Act::relu, out_act}, seed) {
  if (!(sigma > 0.0)) throw ContractError("conditional generator sigma must be positive");
}

CondEncoderNet::CondEncoderNet(std::size_t latent_, std::size_t x_dim_, std::size_t y_dim_,
                               std::vector<std::size_t> hidden, std::uint64_t seed)
    : latent(latent_),
      x_dim(x_dim_),
      y_dim(y_dim_),
      net(MlpSpec{x_dim_ + y_dim_, std::move(hidden), 2 * latent_, Act::relu, Act::linear},
          seed) {}

namespace {

void check_condition(const Tensor& ys, std::size_t y_dim) {
  if (ys.rank() != 2) throw ContractError("condition batch must be [B, y_dim]");
  if (ys.cols() != y_dim) throw ContractError("condition batch has wrong dim");
  if (!ys.all_finite()) throw ContractError("condition batch contains non-finite values");
}

void check_rows(const Tensor& xs, const Tensor& ys, const char* what) {
  if (xs.rows() != ys.rows())
    throw ContractError(std::string(what) + ": batch rows must match bound condition rows");
}

}  // namespace

BoundCondEnergy::BoundCondEnergy(CondEnergyNet& base, const Tensor& ys)
    : base_(&base), ys_(&ys) {
  check_condition(ys, base.y_dim);
}

Tensor BoundCondEnergy::joint(const Tensor& xs) const {
  check_rows(xs, *ys_, "conditional energy");
  return hconcat(xs, *ys_);
}

Tensor BoundCondEnergy::energy(const Tensor& xs) const {
  Tensor raw = base_->net.forward(joint(xs));
  Tensor out({xs.rows()}, 0.0);
  for (std::size_t b = 0; b < xs.rows(); ++b) out[b] = raw[b];
  return out;
}

void BoundCondEnergy::energy_and_grad_x(const Tensor& xs, Tensor& energies,
                                        Tensor& gx) const {
  Trace t = base_->net.forward_traced(joint(xs));
  const std::size_t B = xs.rows();
  energies = Tensor({B}, 0.0);
  for (std::size_t b = 0; b < B; ++b) energies[b] = t.output().at(b, 0);
  Tensor ones(t.output().shape(), 1.0);
  Tensor full = base_->net.grad_input(t, ones);  // [B, x_dim + y_dim]
  gx = xs.rank() == 1 ? Tensor({base_->x_dim}, 0.0) : Tensor::matrix(B, base_->x_dim);
  for (std::size_t b = 0; b < B; ++b)
    std::memcpy(gx.data() + b * base_->x_dim, full.row_ptr(b),
                base_->x_dim * sizeof(double));
}

ParamStore BoundCondEnergy::energy_grad_params(const Tensor& xs,
                                               const std::vector<double>& coeff) const {
  if (coeff.size() != xs.rows())
    throw ContractError("energy_grad_params: coefficient count must match batch");
  Trace t = base_->net.forward_traced(joint(xs));
  Tensor upstream(t.output().shape(), 0.0);
  for (std::size_t b = 0; b < coeff.size(); ++b) upstream.at(b, 0) = coeff[b];
  return base_->net.grad_params(t, upstream);
}

BoundCondGenerator::BoundCondGenerator(CondGeneratorNet& base, const Tensor& ys)
    : base_(&base), ys_(&ys) {
  check_condition(ys, base.y_dim);
}

Tensor BoundCondGenerator::joint(const Tensor& zs) const {
  check_rows(zs, *ys_, "conditional generator");
  return hconcat(*ys_, zs);
}

Tensor BoundCondGenerator::mean(const Tensor& zs) const {
  return base_->net.forward(joint(zs));
}

GenBackward BoundCondGenerator::backward(const Tensor& zs, const Tensor& upstream) const {
  Trace t = base_->net.forward_traced(joint(zs));
  GenBackward out;
  out.grad_params = base_->net.grad_params(t, upstream);
  Tensor full = base_->net.grad_input(t, upstream);  // [B, y_dim + latent]
  const std::size_t B = zs.rows();
  out.grad_z = Tensor::matrix(B, base_->latent);
  for (std::size_t b = 0; b < B; ++b)
    std::memcpy(out.grad_z.row_ptr(b), full.row_ptr(b) + base_->y_dim,
                base_->latent * sizeof(double));
  return out;
}

BoundCondEncoder::BoundCondEncoder(CondEncoderNet& base, const Tensor& ys)
    : base_(&base), ys_(&ys) {
  check_condition(ys, base.y_dim);
}

InferOut BoundCondEncoder::infer(const Tensor& xs) const {
  check_rows(xs, *ys_, "conditional encoder");
  Tensor raw = base_->net.forward(hconcat(xs, *ys_));
  const std::size_t B = xs.rows(), d = base_->latent;
  InferOut out;
  out.mu = Tensor::matrix(B, d);
  out.logv = Tensor::matrix(B, d);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      out.mu.at(b, j) = raw.at(b, j);
      out.logv.at(b, j) = raw.at(b, d + j);
    }
  return out;
}

ParamStore BoundCondEncoder::backward(const Tensor& xs, const Tensor& dmu,
                                      const Tensor& dlogv) const {
  check_rows(xs, *ys_, "conditional encoder");
  Trace t = base_->net.forward_traced(hconcat(xs, *ys_));
  const std::size_t B = xs.rows(), d = base_->latent;
  if (dmu.numel() != B * d || dlogv.numel() != B * d)
    throw ContractError("encoder backward: upstream shapes must be [B, latent]");
  Tensor upstream = Tensor::matrix(B, 2 * d);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d; ++j) {
      upstream.at(b, j) = dmu[b * d + j];
      upstream.at(b, d + j) = dlogv[b * d + j];
    }
  return base_->net.grad_params(t, upstream);
}

LossReport conditional_train_iteration(CondEnergyNet& m, CondGeneratorNet& g,
                                       CondEncoderNet& e, AdamState& opt_theta,
                                       AdamState& opt_alpha, AdamState& opt_beta,
                                       const Tensor& ys, const Tensor& xs,
                                       const TrainConfig& cfg, std::size_t iter) {
  if (xs.rows() != ys.rows())
    throw ContractError("conditional_train_iteration: xs and ys row counts differ");
  if (cfg.synth_batch != ys.rows())
    throw ContractError(
        "conditional_train_iteration: synth_batch must equal the condition batch size");
  BoundCondEnergy bm(m, ys);
  BoundCondGenerator bg(g, ys);
  BoundCondEncoder be(e, ys);
  return train_iteration(bm, bg, be, opt_theta, opt_alpha, opt_beta, xs, cfg, iter);
}

Tensor conditional_predict(CondGeneratorNet& g, CondEnergyNet& m, const Tensor& ys,
                           const SamplerConfig& cfg) {
  BoundCondGenerator bg(g, ys);
  BoundCondEnergy bm(m, ys);
  return predict(bg, bm, ys.rows(), cfg);
}

AncestralChain conditional_sample(CondGeneratorNet& g, CondEnergyNet& m, const Tensor& ys,
                                  const SamplerConfig& cfg) {
  BoundCondGenerator bg(g, ys);
  BoundCondEnergy bm(m, ys);
  return ancestral_langevin_sample(bg, bm, ys.rows(), cfg);
}

}  // namespace ebmvae
