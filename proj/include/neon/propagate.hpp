#pragma once

// Layer-wise relevance propagation over a ForwardTrace.
//
// Pooling layers redistribute with min-take-most / max-take-most (softmax of
// the pooled inputs). Linear layers use the z-family:
//
//   R_j = sum_k z_jk / (sum_j' z_j'k + b_k) R_k
//
// with z_jk = a_j w_jk (z), a_j w_jk^+ (z+, no bias),
// x_j w_jk - l_j w_jk^+ - h_j w_jk^- (zB, no bias) or a_j (w_jk + g w_jk^+)
// (hybrid). Whatever an output does not pass down (its bias share and the
// stabilizer) is booked as leakage, so sum_i R_i + leakage = f_c.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "neon/network.hpp"

namespace neon {

struct MinTakeMost {};
struct MaxTakeMost {};
struct ZRule {};
struct ZPlusRule {};
struct ZBRule {
  Vector lower;
  Vector upper;
};
struct HybridRule {
  double gamma_mix = 0.0;
};

using Rule = std::variant<MinTakeMost, MaxTakeMost, ZRule, ZPlusRule, ZBRule, HybridRule>;

/// One rule per layer, aligned with LayeredNetwork::layers.
using RuleSpec = std::vector<Rule>;

inline const char* rule_name(const Rule& rule) {
  static constexpr const char* names[] = {"min_take_most", "max_take_most", "z", "z_plus", "zb", "hybrid"};
  return names[rule.index()];
}

struct RelevanceState {
  /// Aligned with ForwardTrace::activations: front() is the input heatmap,
  /// back() holds f_c.
  std::vector<Vector> relevance;
  double bias_leakage = 0.0;

  const Vector& input() const { return relevance.front(); }
};

struct LinearRelevance {
  Vector relevance;
  double leakage = 0.0;
};

inline constexpr double kDenominatorEpsilon = 1e-12;
inline constexpr double kDenominatorFloor = 1e-300;

namespace detail {

// Softmax-weighted messages whose sum is R. The smallest-weight entry takes
// the remainder so the correction never dominates a message.
inline Vector take_most(const Vector& weights, double relevance) {
  Vector msg = weights * relevance;
  Eigen::Index rest = 0;
  weights.minCoeff(&rest);
  double others = 0.0;
  for (Eigen::Index j = 0; j < msg.size(); ++j) {
    if (j != rest) others += msg[j];
  }
  msg[rest] = relevance - others;
  return msg;
}

// contributions is out x in (z_kj); extra is the per-output denominator term.
inline LinearRelevance redistribute_linear(const Matrix& contributions, const Vector& extra, const VectorRef& upper) {
  LinearRelevance out{Vector::Zero(contributions.cols()), 0.0};
  for (Eigen::Index k = 0; k < contributions.rows(); ++k) {
    const double rk = upper[k];
    if (rk == 0.0) continue;
    double denom = contributions.row(k).sum() + extra[k];
    if (std::abs(denom) < kDenominatorFloor) {
      out.leakage += rk;
      continue;
    }
    denom += std::copysign(kDenominatorEpsilon, denom);
    double passed = 0.0;
    for (Eigen::Index j = 0; j < contributions.cols(); ++j) {
      const double m = contributions(k, j) / denom * rk;
      out.relevance[j] += m;
      passed += m;
    }
    out.leakage += rk - passed;
  }
  return out;
}

inline void check_shapes(const VectorRef& a, const Matrix& w, const VectorRef& upper) {
  if (w.cols() != a.size() || w.rows() != upper.size()) throw ConfigError("linear rule: shape mismatch");
}

}  // namespace detail

/// R_{j<-k} = exp(-b a_j) / sum_j' exp(-b a_j') * R_k.
inline Vector rule_min_take_most(const VectorRef& inputs, Stiffness beta, double relevance) {
  return detail::take_most(soft_min_weights(inputs, beta), relevance);
}

/// R_{j<-k} = exp(+b a_j) / sum_j' exp(+b a_j') * R_k.
inline Vector rule_max_take_most(const VectorRef& inputs, Stiffness beta, double relevance) {
  return detail::take_most(soft_max_weights(inputs, beta), relevance);
}

/// z-rule; `weights` is out x in, as in LinearLayer.
inline LinearRelevance rule_z(const VectorRef& activations, const Matrix& weights, const VectorRef& bias,
                              const VectorRef& upper) {
  detail::check_shapes(activations, weights, upper);
  const Matrix z = weights.array().rowwise() * activations.transpose().array();
  return detail::redistribute_linear(z, bias, upper);
}

inline LinearRelevance rule_z_plus(const VectorRef& activations, const Matrix& weights, const VectorRef& upper) {
  detail::check_shapes(activations, weights, upper);
  const Matrix z = weights.cwiseMax(0.0).array().rowwise() * activations.transpose().array();
  return detail::redistribute_linear(z, Vector::Zero(weights.rows()), upper);
}

inline LinearRelevance rule_zb(const VectorRef& x, const Matrix& weights, const VectorRef& lower, const VectorRef& upper_bound,
                               const VectorRef& upper) {
  detail::check_shapes(x, weights, upper);
  if (lower.size() != x.size() || upper_bound.size() != x.size()) throw ConfigError("zb rule: bound length mismatch");
  if (!lower.allFinite() || !upper_bound.allFinite() || (lower.array() > upper_bound.array()).any()) {
    throw ConfigError("zb rule: bounds must be finite with lower <= upper");
  }
  const Matrix pos = weights.cwiseMax(0.0);
  const Matrix neg = weights.cwiseMin(0.0);
  const Matrix z = (weights.array().rowwise() * x.transpose().array()) - (pos.array().rowwise() * lower.transpose().array()) -
                   (neg.array().rowwise() * upper_bound.transpose().array());
  return detail::redistribute_linear(z, Vector::Zero(weights.rows()), upper);
}

inline LinearRelevance rule_hybrid(const VectorRef& activations, const Matrix& weights, const VectorRef& bias, double gamma_mix,
                                   const VectorRef& upper) {
  detail::check_shapes(activations, weights, upper);
  const Matrix mixed = weights + gamma_mix * weights.cwiseMax(0.0);
  const Matrix z = mixed.array().rowwise() * activations.transpose().array();
  return detail::redistribute_linear(z, bias, upper);
}

/// Min-take-most on pooling layers; zB on the input layer when `input_box` is
/// given, z elsewhere.
inline RuleSpec default_rules(const LayeredNetwork& net, const std::optional<ZBRule>& input_box = std::nullopt) {
  RuleSpec rules;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    if (std::holds_alternative<SoftMinPoolLayer>(layer)) rules.emplace_back(MinTakeMost{});
    else if (std::holds_alternative<SoftMaxPoolLayer>(layer)) rules.emplace_back(MaxTakeMost{});
    else if (l == 0 && input_box && std::holds_alternative<LinearLayer>(layer)) rules.emplace_back(*input_box);
    else rules.emplace_back(ZRule{});
  }
  return rules;
}

namespace detail {

inline bool is_linear_family(const Rule& rule) {
  return std::holds_alternative<ZRule>(rule) || std::holds_alternative<ZPlusRule>(rule) ||
         std::holds_alternative<ZBRule>(rule) || std::holds_alternative<HybridRule>(rule);
}

[[noreturn]] inline void incompatible(std::size_t l, const Rule& rule, const char* kind) {
  throw ConfigError("layer " + std::to_string(l) + ": rule '" + rule_name(rule) + "' cannot be applied to a " + kind + " layer");
}

inline Vector pool_backward(const PoolGroups& groups, std::size_t width, const VectorRef& a, const VectorRef& upper,
                            Stiffness beta, bool min_pool) {
  Vector lower = Vector::Zero(static_cast<Eigen::Index>(width));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const Vector in = gather(a, groups[g]);
    const double rg = upper[static_cast<Eigen::Index>(g)];
    const Vector msg = min_pool ? rule_min_take_most(in, beta, rg) : rule_max_take_most(in, beta, rg);
    for (std::size_t r = 0; r < groups[g].size(); ++r) lower[static_cast<Eigen::Index>(groups[g][r])] += msg[static_cast<Eigen::Index>(r)];
  }
  return lower;
}

// Relevance of layer l's input given its output relevance.
inline Vector layer_backward(const Layer& layer, std::size_t l, const Rule& rule, const VectorRef& a, const VectorRef& upper,
                             double& leakage) {
  if (const auto* p = std::get_if<SoftMinPoolLayer>(&layer)) {
    if (!std::holds_alternative<MinTakeMost>(rule)) incompatible(l, rule, "soft-min pooling");
    return pool_backward(p->groups, p->input_width, a, upper, p->beta, true);
  }
  if (const auto* p = std::get_if<SoftMaxPoolLayer>(&layer)) {
    if (!std::holds_alternative<MaxTakeMost>(rule)) incompatible(l, rule, "soft-max pooling");
    return pool_backward(p->groups, p->input_width, a, upper, p->beta, false);
  }
  if (std::holds_alternative<SquaredDistanceLayer>(layer)) incompatible(l, rule, "squared-distance");
  if (!is_linear_family(rule)) incompatible(l, rule, std::holds_alternative<LinearLayer>(layer) ? "linear" : "elementwise");
  if (std::holds_alternative<ElementwiseLayer>(layer)) return upper;

  const auto& lin = std::get<LinearLayer>(layer);
  LinearRelevance r;
  if (std::holds_alternative<ZRule>(rule)) r = rule_z(a, lin.weights, lin.bias, upper);
  else if (std::holds_alternative<ZPlusRule>(rule)) r = rule_z_plus(a, lin.weights, upper);
  else if (const auto* zb = std::get_if<ZBRule>(&rule)) r = rule_zb(a, lin.weights, zb->lower, zb->upper, upper);
  else r = rule_hybrid(a, lin.weights, lin.bias, std::get<HybridRule>(rule).gamma_mix, upper);
  leakage += r.leakage;
  return r.relevance;
}

inline RelevanceState propagate_masked(const LayeredNetwork& net, const ForwardTrace& trace, const RuleSpec& rules,
                                       std::optional<std::size_t> keep_top_input) {
  if (rules.size() != net.layers.size()) {
    throw ConfigError("rule spec has " + std::to_string(rules.size()) + " entries for " + std::to_string(net.layers.size()) +
                      " layers");
  }
  if (trace.activations.size() != net.layers.size() + 1) throw ConfigError("trace does not belong to this network");
  RelevanceState state;
  state.relevance.resize(trace.activations.size());
  state.relevance.back() = trace.activations.back();
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    Vector lower = layer_backward(net.layers[l], l, rules[l], trace.activations[l], state.relevance[l + 1], state.bias_leakage);
    if (keep_top_input && l + 1 == net.layers.size()) {
      for (Eigen::Index j = 0; j < lower.size(); ++j) {
        if (static_cast<std::size_t>(j) != *keep_top_input) lower[j] = 0.0;
      }
    }
    state.relevance[l] = std::move(lower);
  }
  return state;
}

}  // namespace detail

/// Top-down propagation of f_c to the input features.
inline RelevanceState propagate(const LayeredNetwork& net, const ForwardTrace& trace, const RuleSpec& rules) {
  return detail::propagate_masked(net, trace, rules, std::nullopt);
}

inline RelevanceState explain(const LayeredNetwork& net, const VectorRef& x, const RuleSpec& rules) {
  return propagate(net, forward(net, x), rules);
}

/// f_c - sum_i R_i - leakage.
inline double conservation_gap(const RelevanceState& state) {
  return state.relevance.back()[0] - state.input().sum() - state.bias_leakage;
}

/// Input relevance flowing through competitor cluster k only. Summing over
/// every k != c reproduces the full heatmap.
inline Vector isolate_competitor(const LayeredNetwork& net, const ForwardTrace& trace, const RuleSpec& rules,
                                 std::size_t competitor) {
  if (net.layers.empty() || !std::holds_alternative<SoftMinPoolLayer>(net.layers.back())) {
    throw ConfigError("isolate_competitor: network does not end in a competitor pooling layer");
  }
  const std::size_t competitors = std::get<SoftMinPoolLayer>(net.layers.back()).input_width;
  if (competitor == net.target_cluster || competitor > competitors) {
    throw DomainError("isolate_competitor: " + std::to_string(competitor) + " is not a competitor of cluster " +
                      std::to_string(net.target_cluster));
  }
  const std::size_t slot = competitor < net.target_cluster ? competitor : competitor - 1;
  return detail::propagate_masked(net, trace, rules, slot).input();
}

/// Sums relevance within each group; groups must partition the indices.
inline Vector pool_relevance(const VectorRef& relevance, const PoolGroups& groups) {
  check_partition(groups, static_cast<std::size_t>(relevance.size()), 0);
  Vector out(static_cast<Eigen::Index>(groups.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) out[static_cast<Eigen::Index>(g)] = gather(relevance, groups[g]).sum();
  return out;
}

struct AggregateExplanation {
  Vector heatmap;
  std::size_t points_used = 0;
};

/// Sum of input heatmaps over the rows of `points`. With `nonneg_filter`,
/// points with f_c < 0 are skipped.
inline AggregateExplanation aggregate_explanations(const LayeredNetwork& net, const Matrix& points, const RuleSpec& rules,
                                                   bool nonneg_filter) {
  AggregateExplanation out{Vector::Zero(static_cast<Eigen::Index>(net.input_dim())), 0};
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const ForwardTrace trace = forward(net, points.row(i).transpose());
    if (nonneg_filter && trace.output() < 0.0) continue;
    out.heatmap += propagate(net, trace, rules).input();
    ++out.points_used;
  }
  return out;
}

}  // namespace neon
