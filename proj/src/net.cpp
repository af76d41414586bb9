#include "ebmvae/net.hpp"

#include <cmath>
#include <cstring>

#include "ebmvae/errors.hpp"
#include "ebmvae/rng.hpp"

namespace ebmvae {

const char* act_name(Act a) {
  switch (a) {
    case Act::linear: return "linear";
    case Act::relu: return "relu";
    case Act::tanh: return "tanh";
  }
  return "?";
}

Act act_from_name(const std::string& s) {
  if (s == "linear") return Act::linear;
  if (s == "relu") return Act::relu;
  if (s == "tanh") return Act::tanh;
  throw ContractError("unknown activation '" + s + "'");
}

std::vector<std::size_t> MlpSpec::layer_dims() const {
  std::vector<std::size_t> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  return dims;
}

double dot_kernel(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

void axpy_kernel(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double rel_err(double a, double b) {
  const double diff = std::fabs(a - b);
  if (diff == 0.0) return 0.0;
  return diff / (std::max(std::fabs(a), std::fabs(b)) + 1e-6);
}

namespace {

void apply_act(Act act, const Tensor& pre, Tensor& post) {
  const std::size_t n = pre.numel();
  switch (act) {
    case Act::linear:
      post = pre;
      break;
    case Act::relu:
      for (std::size_t i = 0; i < n; ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < n; ++i) post[i] = std::tanh(pre[i]);
      break;
  }
}

// dz = upstream-on-post * act'(pre); post passed for tanh (1 - post^2).
void act_backward(Act act, const Tensor& pre, const Tensor& post, Tensor& dz) {
  const std::size_t n = pre.numel();
  switch (act) {
    case Act::linear:
      break;
    case Act::relu:
      for (std::size_t i = 0; i < n; ++i)
        if (pre[i] <= 0.0) dz[i] = 0.0;
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < n; ++i) dz[i] *= 1.0 - post[i] * post[i];
      break;
  }
}

}  // namespace

MlpNet::MlpNet(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.in_dim == 0 || spec_.out_dim == 0)
    throw ContractError("MlpNet: in_dim and out_dim must be positive");
  for (std::size_t h : spec_.hidden)
    if (h == 0) throw ContractError("MlpNet: hidden widths must be positive");

  Rng rng(seed);
  const auto dims = spec_.layer_dims();
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t fan_in = dims[k], fan_out = dims[k + 1];
    Tensor w = Tensor::matrix(fan_out, fan_in);
    const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-s, s);
    params_.add("W" + std::to_string(k), std::move(w));
    params_.add("b" + std::to_string(k), Tensor({fan_out}, 0.0));
  }
}

void MlpNet::check_input(const Tensor& x) const {
  if (x.rank() != 1 && x.rank() != 2)
    throw ContractError("forward: input rank must be 1 or 2");
  if (x.cols() != spec_.in_dim)
    throw ContractError("forward: input has " + std::to_string(x.cols()) +
                        " features, net expects " + std::to_string(spec_.in_dim));
  if (!x.all_finite()) throw ContractError("forward: input contains non-finite values");
}

Trace MlpNet::forward_traced(const Tensor& x) const {
  check_input(x);
  Trace t;
  t.valid = true;
  t.batched = x.rank() == 2;
  const std::size_t B = x.rows();
  t.input = Tensor::matrix(B, spec_.in_dim);
  std::memcpy(t.input.data(), x.data(), x.numel() * sizeof(double));

  const auto dims = spec_.layer_dims();
  const Tensor* in = &t.input;
  t.pre.reserve(spec_.layer_count());
  t.post.reserve(spec_.layer_count());
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t I = dims[k], O = dims[k + 1];
    const Tensor& W = params_.at("W" + std::to_string(k));
    const Tensor& bias = params_.at("b" + std::to_string(k));
    Tensor pre = Tensor::matrix(B, O);
    for (std::size_t b = 0; b < B; ++b) {
      const double* xin = in->row_ptr(b);
      double* out = pre.row_ptr(b);
      for (std::size_t o = 0; o < O; ++o)
        out[o] = dot_kernel(xin, W.row_ptr(o), I) + bias[o];
    }
    const Act act = (k + 2 == dims.size()) ? spec_.out_act : spec_.hidden_act;
    Tensor post = Tensor::matrix(B, O);
    apply_act(act, pre, post);
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
    in = &t.post.back();
  }
  return t;
}

Tensor MlpNet::forward(const Tensor& x) const {
  Trace t = forward_traced(x);
  if (x.rank() == 1) {
    Tensor out({spec_.out_dim}, 0.0);
    std::memcpy(out.data(), t.output().data(), spec_.out_dim * sizeof(double));
    return out;
  }
  return t.output();
}

void MlpNet::check_trace(const Trace& t, const Tensor& upstream) const {
  if (!t.valid) throw UsageError("gradient requested without a forward trace");
  if (t.post.size() != spec_.layer_count())
    throw UsageError("trace does not belong to this net");
  if (upstream.numel() != t.output().numel())
    throw ContractError("upstream shape does not match traced output");
  if (!upstream.all_finite())
    throw ContractError("upstream contains non-finite values");
}

ParamStore MlpNet::grad_params(const Trace& t, const Tensor& upstream) const {
  check_trace(t, upstream);
  ParamStore grads = ParamStore::zeros_like(params_);
  const auto dims = spec_.layer_dims();
  const std::size_t L = spec_.layer_count();
  const std::size_t B = t.input.rows();

  Tensor dz = Tensor::matrix(B, dims[L]);
  std::memcpy(dz.data(), upstream.data(), upstream.numel() * sizeof(double));
  act_backward(spec_.out_act, t.pre[L - 1], t.post[L - 1], dz);

  for (std::size_t k = L; k-- > 0;) {
    const std::size_t I = dims[k], O = dims[k + 1];
    const Tensor& layer_in = (k == 0) ? t.input : t.post[k - 1];
    Tensor& dW = grads.at("W" + std::to_string(k));
    Tensor& db = grads.at("b" + std::to_string(k));
    for (std::size_t b = 0; b < B; ++b) {
      const double* a = layer_in.row_ptr(b);
      const double* g = dz.row_ptr(b);
      for (std::size_t o = 0; o < O; ++o) {
        axpy_kernel(g[o], a, dW.row_ptr(o), I);
        db[o] += g[o];
      }
    }
    if (k == 0) break;
    // Propagate to the previous layer's post-activation, then through its act.
    const Tensor& W = params_.at("W" + std::to_string(k));
    Tensor dprev = Tensor::matrix(B, I);
    for (std::size_t b = 0; b < B; ++b) {
      const double* g = dz.row_ptr(b);
      double* d = dprev.row_ptr(b);
      for (std::size_t o = 0; o < O; ++o) axpy_kernel(g[o], W.row_ptr(o), d, I);
    }
    const Act act = spec_.hidden_act;
    act_backward(act, t.pre[k - 1], t.post[k - 1], dprev);
    dz = std::move(dprev);
  }
  return grads;
}

Tensor MlpNet::grad_input(const Trace& t, const Tensor& upstream) const {
  check_trace(t, upstream);
  const auto dims = spec_.layer_dims();
  const std::size_t L = spec_.layer_count();
  const std::size_t B = t.input.rows();

  Tensor dz = Tensor::matrix(B, dims[L]);
  std::memcpy(dz.data(), upstream.data(), upstream.numel() * sizeof(double));
  act_backward(spec_.out_act, t.pre[L - 1], t.post[L - 1], dz);

  for (std::size_t k = L; k-- > 0;) {
    const std::size_t I = dims[k], O = dims[k + 1];
    const Tensor& W = params_.at("W" + std::to_string(k));
    Tensor dprev = Tensor::matrix(B, I);
    for (std::size_t b = 0; b < B; ++b) {
      const double* g = dz.row_ptr(b);
      double* d = dprev.row_ptr(b);
      for (std::size_t o = 0; o < O; ++o) axpy_kernel(g[o], W.row_ptr(o), d, I);
    }
    if (k > 0) act_backward(spec_.hidden_act, t.pre[k - 1], t.post[k - 1], dprev);
    dz = std::move(dprev);
  }
  if (!t.batched) {
    Tensor out({spec_.in_dim}, 0.0);
    std::memcpy(out.data(), dz.data(), spec_.in_dim * sizeof(double));
    return out;
  }
  return dz;
}

FdReport finite_diff_check(MlpNet& net, const Tensor& x, double h, double tol) {
  if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");
  Trace t = net.forward_traced(x);
  Tensor ones(t.output().shape(), 1.0);
  ParamStore analytic = net.grad_params(t, ones);
  Tensor analytic_in = net.grad_input(t, ones);

  auto objective = [&]() {
    Tensor y = net.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i];
    return s;
  };

  FdReport report;
  for (std::size_t p = 0; p < net.params().count(); ++p) {
    Tensor& param = net.params().value(p);
    double worst = 0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
      const double saved = param[i];
      param[i] = saved + h;
      const double fp = objective();
      param[i] = saved - h;
      const double fm = objective();
      param[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic.value(p)[i], fd));
    }
    report.per_param.emplace_back(net.params().names()[p], worst);
    report.max_rel_param = std::max(report.max_rel_param, worst);
  }

  Tensor xcopy = x;
  for (std::size_t i = 0; i < xcopy.numel(); ++i) {
    const double saved = xcopy[i];
    xcopy[i] = saved + h;
    Tensor yp = net.forward(xcopy);
    xcopy[i] = saved - h;
    Tensor ym = net.forward(xcopy);
    xcopy[i] = saved;
    double fp = 0, fm = 0;
    for (std::size_t j = 0; j < yp.numel(); ++j) {
      fp += yp[j];
      fm += ym[j];
    }
    const double fd = (fp - fm) / (2.0 * h);
    report.max_rel_input = std::max(report.max_rel_input, rel_err(analytic_in[i], fd));
  }

  report.pass = report.max_rel_param <= tol && report.max_rel_input <= tol;
  return report;
}

}  // namespace ebmvae
