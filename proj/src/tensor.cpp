#include "ebmvae/tensor.hpp"

#include <cmath>
#include <cstring>

#include "ebmvae/errors.hpp"

namespace ebmvae {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(shape_.empty() ? 0 : n, fill);
}

Tensor::Tensor(std::initializer_list<double> values)
    : shape_{values.size()}, data_(values) {}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw ContractError("rows(): tensor rank must be 1 or 2");
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw ContractError("cols(): tensor rank must be 1 or 2");
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * cols() + c];
}

const double* Tensor::row_ptr(std::size_t r) const { return data_.data() + r * cols(); }
double* Tensor::row_ptr(std::size_t r) { return data_.data() + r * cols(); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

Tensor Tensor::row_copy(std::size_t r) const {
  Tensor out({cols()}, 0.0);
  std::memcpy(out.data(), row_ptr(r), cols() * sizeof(double));
  return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

void ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw UsageError("ParamStore: duplicate parameter '" + name + "'");
  index_[name] = names_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("ParamStore: no parameter '" + name + "'");
  return values_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("ParamStore: no parameter '" + name + "'");
  return values_[it->second];
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const Tensor& t : values_) flat.insert(flat.end(), t.vec().begin(), t.vec().end());
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  if (flat.size() != total_size())
    throw ContractError("ParamStore: unflatten size mismatch");
  std::size_t off = 0;
  for (Tensor& t : values_) {
    std::memcpy(t.data(), flat.data() + off, t.numel() * sizeof(double));
    off += t.numel();
  }
}

bool ParamStore::same_layout(const ParamStore& o) const {
  if (names_ != o.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (values_[i].shape() != o.values_[i].shape()) return false;
  return true;
}

bool ParamStore::all_finite() const {
  for (const Tensor& t : values_)
    if (!t.all_finite()) return false;
  return true;
}

ParamStore ParamStore::zeros_like(const ParamStore& o) {
  ParamStore out;
  for (std::size_t i = 0; i < o.count(); ++i)
    out.add(o.names()[i], Tensor(o.value(i).shape(), 0.0));
  return out;
}

}  // namespace ebmvae
