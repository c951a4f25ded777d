#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "advdet/autodiff/graph.hpp"
#include "advdet/autodiff/ops.hpp"
#include "advdet/core/rng.hpp"

namespace advdet::nn {

using ad::Graph;
using ad::Matrix;
using ad::Parameter;
using ad::Var;

/// Uniform(-bound, bound) fill from a stream keyed by the parameter name.
template <class T>
Matrix<T> uniform_init(std::int64_t seed, const std::string& name, Eigen::Index rows, Eigen::Index cols,
                       double bound) {
  Rng rng = make_rng(seed, "init/" + name);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <class T>
class Linear {
 public:
  Linear() = default;
  /// `relu_gain` selects He-uniform scaling for layers followed by a ReLU.
  Linear(const std::string& name, int in, int out, std::int64_t seed, bool relu_gain = false) {
    const double bound = relu_gain ? std::sqrt(6.0 / in) : 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = Parameter<T>(name + ".weight", uniform_init<T>(seed, name + ".weight", in, out, bound));
    bias_ = Parameter<T>(name + ".bias", uniform_init<T>(seed, name + ".bias", 1, out, 1.0 / std::sqrt(double(in))));
  }

  Var forward(Graph<T>& g, Var x) { return ad::linear(g, x, g.param(weight_), g.param(bias_)); }

  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <class T>
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(const std::string& name, int in_channels, int out_channels, std::int64_t seed) {
    const int fan_in = 9 * in_channels;
    weight_ = Parameter<T>(name + ".weight",
                           uniform_init<T>(seed, name + ".weight", fan_in, out_channels, std::sqrt(6.0 / fan_in)));
    bias_ = Parameter<T>(name + ".bias", Matrix<T>::Zero(1, out_channels));
  }

  Var forward(Graph<T>& g, Var x) { return ad::conv3x3(g, x, g.param(weight_), g.param(bias_)); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
};

/// Fully connected stack with ReLU between layers and a linear output.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out, std::int64_t seed) {
    int prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      layers_.emplace_back(name + ".fc" + std::to_string(i), prev, hidden[i], seed, true);
      prev = hidden[i];
    }
    layers_.emplace_back(name + ".fc" + std::to_string(hidden.size()), prev, out, seed);
  }

  Var forward(Graph<T>& g, Var x) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i].forward(g, x);
      if (i + 1 < layers_.size()) x = ad::relu(g, x);
    }
    return x;
  }

  int out_features() const { return layers_.back().out_features(); }
  std::vector<int> hidden_dims() const {
    std::vector<int> dims;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) dims.push_back(layers_[i].out_features());
    return dims;
  }
  void collect(std::vector<Parameter<T>*>& out) {
    for (auto& l : layers_) l.collect(out);
  }

 private:
  std::vector<Linear<T>> layers_;
};

}  // namespace advdet::nn
