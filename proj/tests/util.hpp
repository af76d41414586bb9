#pragma once

// Shared scaffolding for the test binaries: throwaway directories and helpers
// that load explicit weight values into nets.

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "ebmvae/net.hpp"
#include "ebmvae/tensor.hpp"

#include "oracles.hpp"

namespace testutil {

// Unique directory under the system temp root, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      auto cand = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(cand, ec)) {
        path = cand;
        return;
      }
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Overwrite one weight matrix: rows are output neurons.
inline void set_matrix(ebmvae::Tensor& w,
                       std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) w.at(r, c++) = v;
    ++r;
  }
}

// Mirror a net's parameters into the independent naive-forward representation.
inline std::vector<oracle::NaiveLayer> naive_layers(const ebmvae::MlpNet& net) {
  const ebmvae::MlpSpec& spec = net.spec();
  const std::vector<std::size_t> dims = spec.layer_dims();
  std::vector<oracle::NaiveLayer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const ebmvae::Tensor& w = net.params().at("W" + std::to_string(k));
    const ebmvae::Tensor& b = net.params().at("b" + std::to_string(k));
    oracle::NaiveLayer layer;
    layer.w.assign(dims[k + 1], std::vector<double>(dims[k], 0.0));
    layer.b.assign(dims[k + 1], 0.0);
    for (std::size_t o = 0; o < dims[k + 1]; ++o) {
      layer.b[o] = b[o];
      for (std::size_t i = 0; i < dims[k]; ++i) layer.w[o][i] = w.at(o, i);
    }
    const ebmvae::Act act = (k + 2 == dims.size()) ? spec.out_act : spec.hidden_act;
    layer.act = act == ebmvae::Act::relu ? 1 : (act == ebmvae::Act::tanh ? 2 : 0);
    layers.push_back(std::move(layer));
  }
  return layers;
}

inline std::vector<double> to_vector(const ebmvae::Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.numel());
}

}  // namespace testutil
