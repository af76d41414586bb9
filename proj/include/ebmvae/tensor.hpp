#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

namespace ebmvae {

// Dense row-major array of doubles. Rank 1 tensors are single examples, rank 2
// tensors are batches laid out [batch][feature]. Nothing fancier is needed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::initializer_list<double> values);  // rank 1

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Batch view helpers: a rank 1 tensor counts as one row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  const double* row_ptr(std::size_t r) const;
  double* row_ptr(std::size_t r);

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool all_finite() const;
  void fill(double v);
  Tensor row_copy(std::size_t r) const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

// Named parameter collection with stable insertion order. Flatten/unflatten
// round-trips exactly so optimizers and checkpoints can treat parameters as a
// single vector.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool has(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t count() const { return names_.size(); }
  std::size_t total_size() const;
  const std::vector<std::string>& names() const { return names_; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }

  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

  bool same_layout(const ParamStore& o) const;
  bool all_finite() const;

  // Same names and shapes, all values zero.
  static ParamStore zeros_like(const ParamStore& o);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ebmvae
