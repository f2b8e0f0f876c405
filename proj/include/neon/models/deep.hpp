#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "neon/dataset.hpp"

namespace neon {

enum class Activation { identity, modified_relu };

/// max(0, x) - 0.75 max(0, x - 1): slope 1 on (0, 1), slope 0.25 above 1.
inline double modified_relu(double x) { return std::max(0.0, x) - 0.75 * std::max(0.0, x - 1.0); }

/// Right derivative of modified_relu.
inline double modified_relu_derivative(double x) {
  if (x < 0.0) return 0.0;
  if (x < 1.0) return 1.0;
  return 0.25;
}

inline double activate(Activation act, double x) { return act == Activation::identity ? x : modified_relu(x); }

inline double activate_derivative(Activation act, double x) {
  return act == Activation::identity ? 1.0 : modified_relu_derivative(x);
}

/// a_out = act(W a_in + b) with W of shape out x in.
struct DeepLayer {
  Matrix weights;
  Vector bias;
  Activation activation = Activation::identity;
};

struct DeepModel {
  std::vector<DeepLayer> feature_map;
  /// K x H centroids in feature space.
  Matrix centroids;

  std::size_t clusters() const noexcept { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return feature_map.empty() ? static_cast<std::size_t>(centroids.cols()) : static_cast<std::size_t>(feature_map.front().weights.cols()); }

  void validate() const {
    Eigen::Index width = feature_map.empty() ? centroids.cols() : feature_map.front().weights.cols();
    for (const DeepLayer& layer : feature_map) {
      if (layer.weights.cols() != width || layer.bias.size() != layer.weights.rows()) {
        throw DomainError("deep model: layer dimensions do not chain");
      }
      width = layer.weights.rows();
    }
    if (centroids.cols() != width) throw DomainError("deep model: feature width does not match centroid width");
  }
};

/// Phi(x).
inline Vector feature_map(const DeepModel& model, const VectorRef& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw DomainError("feature_map: dimension mismatch");
  Vector a = x;
  for (const DeepLayer& layer : model.feature_map) {
    Vector z = layer.weights * a + layer.bias;
    a = z.unaryExpr([&](double v) { return activate(layer.activation, v); });
  }
  return a;
}

/// ||Phi(x) - mu_k||^2.
inline Vector outlierness_deep(const DeepModel& model, const VectorRef& x) {
  const Vector phi = feature_map(model, x);
  Vector o(model.centroids.rows());
  for (Eigen::Index k = 0; k < o.size(); ++k) o[k] = (phi.transpose() - model.centroids.row(k)).squaredNorm();
  return o;
}

/// Scaled one-hot centroids: row k is `scale` * e_k in R^width.
inline Matrix one_hot_centroids(std::size_t k, std::size_t width, double scale = 1.0) {
  if (width < k) throw DomainError("one_hot_centroids: feature width smaller than cluster count");
  Matrix c = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < k; ++r) c(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)) = scale;
  return c;
}

/// Mean frozen-assignment loss (1/N) sum_i ||Phi(x_i) - mu_{y_i}||^2.
inline double deep_loss(const DeepModel& model, const Dataset& data) {
  const Assignment& labels = data.require_labels("deep_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += (feature_map(model, data.point(i)).transpose() - model.centroids.row(labels[i])).squaredNorm();
  }
  return total / static_cast<double>(data.size());
}

/// Gradient of deep_loss w.r.t. every weight and bias, by backpropagation.
inline std::vector<DeepLayer> deep_loss_gradient(const DeepModel& model, const Dataset& data) {
  const Assignment& labels = data.require_labels("deep_loss_gradient");
  std::vector<DeepLayer> grad;
  for (const DeepLayer& layer : model.feature_map) {
    grad.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()), Vector::Zero(layer.bias.size()),
                    layer.activation});
  }
  const double scale = 2.0 / static_cast<double>(data.size());
  std::vector<Vector> inputs(model.feature_map.size());
  std::vector<Vector> pre(model.feature_map.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Vector a = data.point(i);
    for (std::size_t l = 0; l < model.feature_map.size(); ++l) {
      const DeepLayer& layer = model.feature_map[l];
      inputs[l] = a;
      pre[l] = layer.weights * a + layer.bias;
      a = pre[l].unaryExpr([&](double v) { return activate(layer.activation, v); });
    }
    Vector delta = scale * (a - model.centroids.row(labels[i]).transpose());
    for (std::size_t l = model.feature_map.size(); l-- > 0;) {
      const DeepLayer& layer = model.feature_map[l];
      const Vector dz = delta.cwiseProduct(pre[l].unaryExpr([&](double v) { return activate_derivative(layer.activation, v); }));
      grad[l].weights += dz * inputs[l].transpose();
      grad[l].bias += dz;
      delta = layer.weights.transpose() * dz;
    }
  }
  return grad;
}

/// Random feature map for the given layer widths (input first). Hidden layers
/// use modified_relu, the last layer is linear. Weights ~ N(0, 1/fan_in).
inline std::vector<DeepLayer> random_feature_map(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw DomainError("architecture needs at least input and output widths");
  std::mt19937_64 rng(seed);
  std::vector<DeepLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    DeepLayer layer{Matrix(out, in), Vector::Zero(out),
                    l + 2 == widths.size() ? Activation::identity : Activation::modified_relu};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = normal(rng);
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

struct DeepTrainConfig {
  /// Layer widths, input dimension first, feature width last.
  std::vector<std::size_t> architecture;
  /// Fixed K x H centroids.
  Matrix centroids;
  int epochs = 200;
  double step = 1e-2;
  std::uint64_t seed = 0;
  /// Overrides the random initialization when set.
  std::optional<std::vector<DeepLayer>> initial;
};

struct DeepFit {
  DeepModel model;
  /// Loss before the first epoch and after every epoch (epochs + 1 values).
  std::vector<double> loss;
};

/// Full-batch gradient descent on the frozen-assignment objective.
inline DeepFit train_deep(const Dataset& data, const DeepTrainConfig& config) {
  data.validate();
  const Assignment& labels = data.require_labels("train_deep");
  if (config.architecture.empty() || config.architecture.front() != data.dim()) {
    throw DomainError("train_deep: architecture input width must equal data dimension");
  }
  if (static_cast<std::size_t>(config.centroids.cols()) != config.architecture.back()) {
    throw DomainError("train_deep: architecture output width " + std::to_string(config.architecture.back()) +
                      " does not match centroid width " + std::to_string(config.centroids.cols()));
  }
  for (int y : labels) {
    if (y >= config.centroids.rows()) throw DomainError("train_deep: label without a centroid");
  }
  for (Eigen::Index a = 0; a < config.centroids.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < config.centroids.rows(); ++b) {
      if (config.centroids.row(a) == config.centroids.row(b)) throw DomainError("train_deep: centroid rows must be distinct");
    }
  }
  DeepFit fit;
  fit.model.feature_map = config.initial ? *config.initial : random_feature_map(config.architecture, config.seed);
  fit.model.centroids = config.centroids;
  fit.model.validate();
  fit.loss.push_back(deep_loss(fit.model, data));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto grad = deep_loss_gradient(fit.model, data);
    for (std::size_t l = 0; l < grad.size(); ++l) {
      fit.model.feature_map[l].weights -= config.step * grad[l].weights;
      fit.model.feature_map[l].bias -= config.step * grad[l].bias;
    }
    fit.loss.push_back(deep_loss(fit.model, data));
  }
  return fit;
}

}  // namespace neon
