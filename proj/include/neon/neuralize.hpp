#pragma once

// Rewrites trained cluster models as detection/pooling networks computing
// the logit f_c(x) of a target cluster c.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "neon/models.hpp"
#include "neon/network.hpp"

namespace neon {

using ClusterModel = std::variant<StandardModel, KernelModel, DeepModel>;

inline constexpr std::size_t kDefaultImprovedKernelCap = 1'000'000;

inline std::size_t cluster_count(const ClusterModel& model) {
  return std::visit([](const auto& m) { return m.clusters(); }, model);
}

inline std::size_t model_dim(const ClusterModel& model) {
  return std::visit([](const auto& m) { return m.dim(); }, model);
}

inline Vector outlierness(const ClusterModel& model, const VectorRef& x) {
  return std::visit(
      [&](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, StandardModel>) return outlierness_standard(m, x);
        else if constexpr (std::is_same_v<T, KernelModel>) return outlierness_kernel(m, x);
        else return outlierness_deep(m, x);
      },
      model);
}

/// Nearest cluster of every row, ties to the lowest index.
inline Assignment assign(const ClusterModel& model, const Matrix& points) {
  Assignment out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Eigen::Index best = 0;
    outlierness(model, points.row(i).transpose()).minCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace detail {

inline void require_target(std::size_t clusters, std::size_t c) {
  if (clusters < 2) throw DomainError("neuralize: at least two clusters are required");
  if (c >= clusters) throw DomainError("neuralize: target cluster " + std::to_string(c) + " out of range");
}

// h_k = w_k^T a + b_k for k != c, with w_k = 2 (mu_c - mu_k), b_k = ||mu_k||^2 - ||mu_c||^2.
inline LinearLayer centroid_difference_layer(const Matrix& centroids, std::size_t c) {
  const auto k_count = centroids.rows();
  const auto ci = static_cast<Eigen::Index>(c);
  LinearLayer layer{Matrix(k_count - 1, centroids.cols()), Vector(k_count - 1)};
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (k == ci) continue;
    layer.weights.row(row) = 2.0 * (centroids.row(ci) - centroids.row(k));
    layer.bias[row] = centroids.row(k).squaredNorm() - centroids.row(ci).squaredNorm();
    ++row;
  }
  return layer;
}

inline SoftMinPoolLayer top_pool(std::size_t competitors, Stiffness beta) {
  std::vector<std::size_t> all(competitors);
  for (std::size_t k = 0; k < competitors; ++k) all[k] = k;
  return SoftMinPoolLayer{beta, {all}, competitors, true};
}

}  // namespace detail

/// Linear detection (K - 1 competitor margins) followed by beta-scaled soft-min pooling.
inline LayeredNetwork build_standard(const StandardModel& model, std::size_t c, Stiffness beta) {
  detail::require_target(model.clusters(), c);
  LayeredNetwork net{{}, c, ModelTag::standard};
  net.layers.emplace_back(detail::centroid_difference_layer(model.centroids, c));
  net.layers.emplace_back(detail::top_pool(model.clusters() - 1, beta));
  net.validate();
  return net;
}

/// Distances to support points, per-cluster soft-min (gamma), margin
/// subtraction, top soft-min (beta). Its first layer is not linear, so it
/// does not support input-level relevance propagation.
inline LayeredNetwork build_kernel_naive(const KernelModel& model, std::size_t c, Stiffness beta) {
  detail::require_target(model.clusters(), c);
  const std::size_t k_count = model.clusters();
  LayeredNetwork net{{}, c, ModelTag::kernel_naive};

  SquaredDistanceLayer dist{model.support, Vector(model.support.rows())};
  for (Eigen::Index j = 0; j < model.support.rows(); ++j) dist.bias[j] = model.bias(static_cast<std::size_t>(model.membership[static_cast<std::size_t>(j)]));
  net.layers.emplace_back(std::move(dist));

  PoolGroups per_cluster;
  for (std::size_t k = 0; k < k_count; ++k) per_cluster.push_back(model.members(k));
  net.layers.emplace_back(SoftMinPoolLayer{model.gamma, per_cluster, static_cast<std::size_t>(model.support.rows()), false});

  LinearLayer diff{Matrix::Zero(static_cast<Eigen::Index>(k_count - 1), static_cast<Eigen::Index>(k_count)),
                   Vector::Zero(static_cast<Eigen::Index>(k_count - 1))};
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (k == c) continue;
    diff.weights(row, static_cast<Eigen::Index>(k)) = 1.0;
    diff.weights(row, static_cast<Eigen::Index>(c)) = -1.0;
    ++row;
  }
  net.layers.emplace_back(std::move(diff));
  net.layers.emplace_back(detail::top_pool(k_count - 1, beta));
  net.validate();
  return net;
}

/// Linear detection a_ijk = 2 (x_i - x_j)^T x + ||x_j||^2 - ||x_i||^2 + b_k - b_c
/// for i in C_c, j in C_k, k != c; then soft-max over i (gamma), soft-min over
/// j (gamma) and soft-min over k (beta, scaled). Rows are ordered by k, then j,
/// then i.
inline LayeredNetwork build_kernel_improved(const KernelModel& model, std::size_t c, Stiffness beta,
                                            std::size_t max_units = kDefaultImprovedKernelCap) {
  detail::require_target(model.clusters(), c);
  const std::size_t k_count = model.clusters();
  const auto own = model.members(c);
  std::size_t rival_members = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (k != c) rival_members += model.members(k).size();
  }
  const std::size_t units = own.size() * rival_members;
  if (units > max_units) {
    throw ResourceError("build_kernel_improved: first layer would have " + std::to_string(units) +
                        " units, above the cap of " + std::to_string(max_units));
  }

  LayeredNetwork net{{}, c, ModelTag::kernel_improved};
  LinearLayer detect{Matrix(static_cast<Eigen::Index>(units), model.support.cols()), Vector(static_cast<Eigen::Index>(units))};
  PoolGroups over_i;
  PoolGroups over_j;
  const double bias_c = model.bias(c);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (k == c) continue;
    const double bias_k = model.bias(k);
    std::vector<std::size_t> js;
    for (std::size_t j : model.members(k)) {
      const auto xj = model.support.row(static_cast<Eigen::Index>(j));
      std::vector<std::size_t> is;
      for (std::size_t i : own) {
        const auto xi = model.support.row(static_cast<Eigen::Index>(i));
        detect.weights.row(row) = 2.0 * (xi - xj);
        detect.bias[row] = xj.squaredNorm() - xi.squaredNorm() + bias_k - bias_c;
        is.push_back(static_cast<std::size_t>(row++));
      }
      js.push_back(over_i.size());
      over_i.push_back(std::move(is));
    }
    over_j.push_back(std::move(js));
  }
  const std::size_t pairs = over_i.size();
  net.layers.emplace_back(std::move(detect));
  net.layers.emplace_back(SoftMaxPoolLayer{model.gamma, std::move(over_i), units});
  net.layers.emplace_back(SoftMinPoolLayer{model.gamma, std::move(over_j), pairs, false});
  net.layers.emplace_back(detail::top_pool(k_count - 1, beta));
  net.validate();
  return net;
}

/// Feature-map layers (Linear, then Elementwise for nonlinear activations),
/// then the centroid-difference layer and the scaled top soft-min.
inline LayeredNetwork build_deep(const DeepModel& model, std::size_t c, Stiffness beta) {
  model.validate();
  detail::require_target(model.clusters(), c);
  LayeredNetwork net{{}, c, ModelTag::deep};
  for (const DeepLayer& layer : model.feature_map) {
    net.layers.emplace_back(LinearLayer{layer.weights, layer.bias});
    if (layer.activation != Activation::identity) {
      net.layers.emplace_back(ElementwiseLayer{layer.activation, static_cast<std::size_t>(layer.weights.rows())});
    }
  }
  net.layers.emplace_back(detail::centroid_difference_layer(model.centroids, c));
  net.layers.emplace_back(detail::top_pool(model.clusters() - 1, beta));
  net.validate();
  return net;
}

enum class KernelNetwork { naive, improved };

inline LayeredNetwork build_network(const ClusterModel& model, std::size_t c, Stiffness beta,
                                    KernelNetwork kernel_form = KernelNetwork::improved) {
  return std::visit(
      [&](const auto& m) -> LayeredNetwork {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, StandardModel>) return build_standard(m, c, beta);
        else if constexpr (std::is_same_v<T, KernelModel>)
          return kernel_form == KernelNetwork::naive ? build_kernel_naive(m, c, beta) : build_kernel_improved(m, c, beta);
        else return build_deep(m, c, beta);
      },
      model);
}

}  // namespace neon
