#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "plasticity/mlp.hpp"

namespace plasticity::testing {

inline LayerSpec make_layer(Tensor weights, Tensor bias, Activation act) {
  LayerSpec l;
  l.n_out = weights.rows();
  l.n_in = weights.cols();
  l.activation = act;
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  return l;
}

inline MlpNetwork make_net(std::vector<LayerSpec> layers) {
  MlpNetwork net;
  net.layers = std::move(layers);
  net.validate();
  return net;
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(Shape{rows, cols});
  for (auto& v : t.values()) v = n(rng);
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("plasticity_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace plasticity::testing
