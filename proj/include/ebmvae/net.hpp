#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ebmvae/tensor.hpp"

namespace ebmvae {

enum class Act { linear, relu, tanh };

const char* act_name(Act a);
Act act_from_name(const std::string& s);

// Dense multilayer perceptron shape: in -> hidden... -> out, one activation
// for hidden layers and one for the output head.
struct MlpSpec {
  std::size_t in_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t out_dim = 0;
  Act hidden_act = Act::relu;
  Act out_act = Act::linear;

  // in_dim, hidden..., out_dim
  std::vector<std::size_t> layer_dims() const;
  std::size_t layer_count() const { return hidden.size() + 1; }
};

// Evaluation record for one forward pass: layer inputs and pre-activations,
// everything backward passes need. Produced by forward_traced; a
// default-constructed Trace is invalid and gradient calls reject it.
struct Trace {
  bool valid = false;
  bool batched = false;          // true when the original input was rank 2
  Tensor input;                  // [B, in_dim]
  std::vector<Tensor> pre;       // pre-activation per layer, [B, dims[k+1]]
  std::vector<Tensor> post;      // post-activation per layer
  const Tensor& output() const { return post.back(); }
};

class MlpNet {
 public:
  MlpNet() = default;
  MlpNet(MlpSpec spec, std::uint64_t seed);

  const MlpSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Accepts [in_dim] or [B, in_dim]; returns matching rank. Rejects non-finite
  // or wrongly shaped input.
  Tensor forward(const Tensor& x) const;
  Trace forward_traced(const Tensor& x) const;

  // upstream must match the traced output shape. grad_params returns d<upstream,
  // output>/dparam with the trace's layout; grad_input the same w.r.t. x.
  ParamStore grad_params(const Trace& t, const Tensor& upstream) const;
  Tensor grad_input(const Trace& t, const Tensor& upstream) const;

 private:
  void check_input(const Tensor& x) const;
  void check_trace(const Trace& t, const Tensor& upstream) const;

  MlpSpec spec_;
  ParamStore params_;
};

struct FdReport {
  double max_rel_param = 0.0;
  double max_rel_input = 0.0;
  std::vector<std::pair<std::string, double>> per_param;  // max rel err per tensor
  bool pass = false;
};

// Central-difference comparison of grad_params/grad_input against a direct
// numeric derivative of sum(output), step h. pass <=> both maxima are <= tol.
FdReport finite_diff_check(MlpNet& net, const Tensor& x, double h, double tol);

// |a-b| scaled by magnitude, guarded so that a pair of exact zeros scores 0.
double rel_err(double a, double b);

// Small deterministic dot/axpy kernels shared by the dense layers. Fixed
// accumulation order keeps results bitwise reproducible.
double dot_kernel(const double* a, const double* b, std::size_t n);
void axpy_kernel(double alpha, const double* x, double* y, std::size_t n);

}  // namespace ebmvae
