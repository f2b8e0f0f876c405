#pragma once

// Soft-min / soft-max pooling (reversed log-sum-exp) and the soft cluster
// assignment built on top of it.
//
//   min^b{v} = -1/b log sum_j exp(-b v_j)
//   max^b{v} = +1/b log sum_j exp(+b v_j)
//
// Every exponential is taken after subtracting the extremum, so the largest
// term is exactly exp(0) = 1 and nothing overflows for large b or |v|.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "neon/error.hpp"

namespace neon {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;

/// Inverse temperature of a pooling operation. `Stiffness::infinite()` is the
/// hard limit (exact min/max, one-hot assignment).
class Stiffness {
 public:
  explicit Stiffness(double value) : value_(value) {
    if (!(value > 0.0) || std::isnan(value)) {
      throw DomainError("stiffness must be positive, got " + std::to_string(value));
    }
  }

  static Stiffness infinite() { return Stiffness(std::numeric_limits<double>::infinity()); }

  bool is_infinite() const noexcept { return std::isinf(value_); }
  double value() const noexcept { return value_; }

  friend bool operator==(const Stiffness&, const Stiffness&) = default;

 private:
  double value_;
};

namespace detail {

inline void require_nonempty(const VectorRef& values, const char* op) {
  if (values.size() == 0) throw DomainError(std::string(op) + ": empty input");
}

// Normalized exp(sign * beta * (v - extremum)); ties at the extremum split
// equally in the hard limit.
inline Vector exp_weights(const VectorRef& values, Stiffness beta, double sign) {
  const double ext = sign < 0 ? values.minCoeff() : values.maxCoeff();
  Vector w(values.size());
  if (beta.is_infinite()) {
    for (Eigen::Index j = 0; j < values.size(); ++j) w[j] = values[j] == ext ? 1.0 : 0.0;
  } else {
    for (Eigen::Index j = 0; j < values.size(); ++j) {
      w[j] = std::exp(sign * beta.value() * (values[j] - ext));
    }
  }
  return w / w.sum();
}

}  // namespace detail

/// -b^-1 log sum exp(-b v). Lies in [min(v) - log(m)/b, min(v)].
inline double soft_min(const VectorRef& values, Stiffness beta) {
  detail::require_nonempty(values, "soft_min");
  const double lo = values.minCoeff();
  if (beta.is_infinite()) return lo;
  const double b = beta.value();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < values.size(); ++j) sum += std::exp(-b * (values[j] - lo));
  return lo - std::log(sum) / b;
}

/// +b^-1 log sum exp(+b v). Lies in [max(v), max(v) + log(m)/b].
inline double soft_max(const VectorRef& values, Stiffness beta) {
  detail::require_nonempty(values, "soft_max");
  const double hi = values.maxCoeff();
  if (beta.is_infinite()) return hi;
  const double b = beta.value();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < values.size(); ++j) sum += std::exp(b * (values[j] - hi));
  return hi + std::log(sum) / b;
}

/// b * min^b{v} = -log sum exp(-b v), finite-or-signed-infinite in the hard
/// limit. With infinite b and min(v) == 0 this returns -log(#zeros), the
/// log-odds of an equal split among tied clusters.
inline double scaled_soft_min(const VectorRef& values, Stiffness beta) {
  detail::require_nonempty(values, "scaled_soft_min");
  const double lo = values.minCoeff();
  if (beta.is_infinite()) {
    if (lo > 0.0) return std::numeric_limits<double>::infinity();
    if (lo < 0.0) return -std::numeric_limits<double>::infinity();
    return -std::log(static_cast<double>((values.array() == 0.0).count()));
  }
  const double b = beta.value();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < values.size(); ++j) sum += std::exp(-b * (values[j] - lo));
  return b * lo - std::log(sum);
}

/// Normalized exp(-b v_j): the soft-min pooling's input weights.
inline Vector soft_min_weights(const VectorRef& values, Stiffness beta) {
  detail::require_nonempty(values, "soft_min_weights");
  return detail::exp_weights(values, beta, -1.0);
}

/// Normalized exp(+b v_j).
inline Vector soft_max_weights(const VectorRef& values, Stiffness beta) {
  detail::require_nonempty(values, "soft_max_weights");
  return detail::exp_weights(values, beta, +1.0);
}

/// P(cluster k | x) = exp(-b o_k) / sum_k' exp(-b o_k').
inline Vector soft_assignment(const VectorRef& outlier_scores, Stiffness beta) {
  return soft_min_weights(outlier_scores, beta);
}

/// Differences o_k - o_c over the competitors k != c, in increasing k.
inline Vector competitor_margins(const VectorRef& outlier_scores, std::size_t cluster) {
  const auto k_count = static_cast<std::size_t>(outlier_scores.size());
  if (k_count < 2) throw DomainError("logit: at least two clusters are required");
  if (cluster >= k_count) throw DomainError("logit: cluster index out of range");
  Vector margins(static_cast<Eigen::Index>(k_count - 1));
  Eigen::Index out = 0;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (k == cluster) continue;
    margins[out++] = outlier_scores[static_cast<Eigen::Index>(k)] -
                     outlier_scores[static_cast<Eigen::Index>(cluster)];
  }
  return margins;
}

/// Cluster-membership log-odds f_c = b * min^b_{k != c}{o_k - o_c}.
inline double logit(const VectorRef& outlier_scores, std::size_t cluster, Stiffness beta) {
  return scaled_soft_min(competitor_margins(outlier_scores, cluster), beta);
}

}  // namespace neon
