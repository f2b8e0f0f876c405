#pragma once

// Layered detection/pooling networks and their forward pass.

#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "neon/models/deep.hpp"
#include "neon/pooling.hpp"

namespace neon {

using PoolGroups = std::vector<std::vector<std::size_t>>;

/// out = W a + b, W is out x in.
struct LinearLayer {
  Matrix weights;
  Vector bias;
};

/// out_j = ||a - c_j||^2 + b_j. Only appears in the naive kernel network.
struct SquaredDistanceLayer {
  Matrix centers;
  Vector bias;
};

/// out_g = min^beta over the inputs of group g. When `scale_by_beta` is set the
/// output is beta * min^beta, the shape of the top logit layer.
struct SoftMinPoolLayer {
  Stiffness beta{1.0};
  PoolGroups groups;
  std::size_t input_width = 0;
  bool scale_by_beta = false;
};

/// out_g = max^beta over the inputs of group g.
struct SoftMaxPoolLayer {
  Stiffness beta{1.0};
  PoolGroups groups;
  std::size_t input_width = 0;
};

struct ElementwiseLayer {
  Activation activation = Activation::identity;
  std::size_t width = 0;
};

using Layer = std::variant<LinearLayer, SquaredDistanceLayer, SoftMinPoolLayer, SoftMaxPoolLayer, ElementwiseLayer>;

enum class ModelTag { standard, kernel_naive, kernel_improved, deep };

inline const char* to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::standard: return "standard";
    case ModelTag::kernel_naive: return "kernel_naive";
    case ModelTag::kernel_improved: return "kernel_improved";
    case ModelTag::deep: return "deep";
  }
  return "?";
}

inline std::size_t input_width(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::size_t {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLayer>) return static_cast<std::size_t>(l.weights.cols());
        else if constexpr (std::is_same_v<T, SquaredDistanceLayer>) return static_cast<std::size_t>(l.centers.cols());
        else if constexpr (std::is_same_v<T, ElementwiseLayer>) return l.width;
        else return l.input_width;
      },
      layer);
}

inline std::size_t output_width(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::size_t {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLayer>) return static_cast<std::size_t>(l.weights.rows());
        else if constexpr (std::is_same_v<T, SquaredDistanceLayer>) return static_cast<std::size_t>(l.centers.rows());
        else if constexpr (std::is_same_v<T, ElementwiseLayer>) return l.width;
        else return l.groups.size();
      },
      layer);
}

inline Vector gather(const VectorRef& a, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out[static_cast<Eigen::Index>(r)] = a[static_cast<Eigen::Index>(idx[r])];
  return out;
}

inline Vector apply_layer(const Layer& layer, const VectorRef& a) {
  return std::visit(
      [&](const auto& l) -> Vector {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLayer>) {
          return l.weights * a + l.bias;
        } else if constexpr (std::is_same_v<T, SquaredDistanceLayer>) {
          Vector out(l.centers.rows());
          for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = (a.transpose() - l.centers.row(j)).squaredNorm() + l.bias[j];
          return out;
        } else if constexpr (std::is_same_v<T, SoftMinPoolLayer>) {
          Vector out(static_cast<Eigen::Index>(l.groups.size()));
          for (std::size_t g = 0; g < l.groups.size(); ++g) {
            const Vector in = gather(a, l.groups[g]);
            out[static_cast<Eigen::Index>(g)] = l.scale_by_beta ? scaled_soft_min(in, l.beta) : soft_min(in, l.beta);
          }
          return out;
        } else if constexpr (std::is_same_v<T, SoftMaxPoolLayer>) {
          Vector out(static_cast<Eigen::Index>(l.groups.size()));
          for (std::size_t g = 0; g < l.groups.size(); ++g) out[static_cast<Eigen::Index>(g)] = soft_max(gather(a, l.groups[g]), l.beta);
          return out;
        } else {
          return a.unaryExpr([&](double v) { return activate(l.activation, v); });
        }
      },
      layer);
}

inline void check_partition(const PoolGroups& groups, std::size_t width, std::size_t layer_index) {
  std::vector<int> seen(width, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("layer " + std::to_string(layer_index) + ": empty pooling group");
    for (std::size_t j : g) {
      if (j >= width || seen[j]++) {
        throw ConfigError("layer " + std::to_string(layer_index) + ": pooling groups do not partition the input");
      }
    }
  }
  for (int s : seen) {
    if (!s) throw ConfigError("layer " + std::to_string(layer_index) + ": pooling groups do not cover the input");
  }
}

/// A network computing the logit f_c(x) of one target cluster.
struct LayeredNetwork {
  std::vector<Layer> layers;
  std::size_t target_cluster = 0;
  ModelTag model_tag = ModelTag::standard;

  std::size_t input_dim() const { return layers.empty() ? 0 : input_width(layers.front()); }

  void validate() const {
    if (layers.empty()) throw ConfigError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& layer = layers[l];
      if (l > 0 && input_width(layer) != output_width(layers[l - 1])) {
        throw ConfigError("layer " + std::to_string(l) + ": input width does not match previous output");
      }
      if (const auto* lin = std::get_if<LinearLayer>(&layer); lin && lin->bias.size() != lin->weights.rows()) {
        throw ConfigError("layer " + std::to_string(l) + ": bias length mismatch");
      }
      if (const auto* dist = std::get_if<SquaredDistanceLayer>(&layer); dist && dist->bias.size() != dist->centers.rows()) {
        throw ConfigError("layer " + std::to_string(l) + ": bias length mismatch");
      }
      if (const auto* p = std::get_if<SoftMinPoolLayer>(&layer)) check_partition(p->groups, p->input_width, l);
      if (const auto* p = std::get_if<SoftMaxPoolLayer>(&layer)) check_partition(p->groups, p->input_width, l);
    }
    if (output_width(layers.back()) != 1) throw ConfigError("network must end in a single output");
  }
};

/// Activations of every layer, input first; size is layers + 1.
struct ForwardTrace {
  std::vector<Vector> activations;

  const Vector& input() const { return activations.front(); }
  double output() const { return activations.back()[0]; }
};

inline ForwardTrace forward(const LayeredNetwork& net, const VectorRef& x) {
  if (static_cast<std::size_t>(x.size()) != net.input_dim()) throw DomainError("forward: input dimension mismatch");
  ForwardTrace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.emplace_back(x);
  for (const Layer& layer : net.layers) trace.activations.push_back(apply_layer(layer, trace.activations.back()));
  return trace;
}

inline double evaluate(const LayeredNetwork& net, const VectorRef& x) { return forward(net, x).output(); }

}  // namespace neon
