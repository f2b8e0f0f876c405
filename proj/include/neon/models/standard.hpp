#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "neon/dataset.hpp"

namespace neon {

/// K x D centroid matrix; o_k(x) = ||x - mu_k||^2.
struct StandardModel {
  Matrix centroids;

  std::size_t clusters() const noexcept { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(centroids.cols()); }
};

struct LloydResult {
  StandardModel model;
  Assignment assignment;
  /// Objective sum_i ||x_i - mu_{a_i}||^2 after every centroid update.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

inline constexpr int kLloydMaxIterations = 300;

inline Vector outlierness_standard(const StandardModel& model, const VectorRef& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) {
    throw DomainError("outlierness_standard: dimension mismatch");
  }
  Vector o(model.centroids.rows());
  for (Eigen::Index k = 0; k < o.size(); ++k) o[k] = (x.transpose() - model.centroids.row(k)).squaredNorm();
  return o;
}

inline double standard_objective(const Matrix& points, const Matrix& centroids, const Assignment& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    total += (points.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return total;
}

namespace detail {

// Per-cluster means of `points` under `assignment`; throws on an empty cluster.
inline Matrix cluster_means(const Matrix& points, const Assignment& assignment, std::size_t k) {
  Matrix means = Matrix::Zero(static_cast<Eigen::Index>(k), points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto c = static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)]);
    means.row(static_cast<Eigen::Index>(c)) += points.row(i);
    ++counts[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) throw DomainError("cluster " + std::to_string(c) + " is empty");
    means.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  }
  return means;
}

// k-means++ seeding: first centre uniform, then D^2-weighted draws.
inline Matrix seed_centroids(const Matrix& points, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const auto last = static_cast<Eigen::Index>(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - points.row(last)).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    } else {
      // All remaining points coincide with a centre: take the lowest unused index.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) pick = i;
      }
    }
    chosen.push_back(pick);
  }
  return gather_rows(points, chosen);
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding. Stops when assignments are stable
/// or after 300 iterations. Ties go to the lowest cluster index; a cluster
/// that empties is re-seeded with the worst-fitting point.
inline LloydResult train_standard(const Dataset& data, std::size_t k, std::uint64_t seed) {
  data.validate();
  const std::size_t n = data.size();
  if (k < 1) throw DomainError("train_standard: k must be at least 1");
  if (k > n) throw DomainError("train_standard: k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));

  const Matrix& x = data.points;
  LloydResult result;
  Matrix centroids = detail::seed_centroids(x, k, seed);
  Assignment assignment(n, -1);
  std::vector<double> cost(n);

  for (int iter = 1; iter <= kLloydMaxIterations; ++iter) {
    bool changed = false;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = (x.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      changed |= assignment[i] != best;
      assignment[i] = best;
      cost[i] = best_d;
      ++counts[static_cast<std::size_t>(best)];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t worst = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(assignment[i])] < 2) continue;
        if (worst == n || cost[i] > cost[worst]) worst = i;
      }
      --counts[static_cast<std::size_t>(assignment[worst])];
      assignment[worst] = static_cast<int>(c);
      cost[worst] = 0.0;
      counts[c] = 1;
      changed = true;
    }
    centroids = detail::cluster_means(x, assignment, k);
    result.objective.push_back(standard_objective(x, centroids, assignment));
    result.iterations = iter;
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  result.model.centroids = std::move(centroids);
  result.assignment = std::move(assignment);
  return result;
}

/// Class means with the assignment frozen to the labels.
inline StandardModel centroids_from_labels(const Dataset& data) {
  data.validate();
  const Assignment& labels = data.require_labels("centroids_from_labels");
  return StandardModel{detail::cluster_means(data.points, labels, data.label_count())};
}

/// Hard nearest-centroid assignment, ties to the lowest index.
inline Assignment assign_standard(const StandardModel& model, const Matrix& points) {
  Assignment out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Eigen::Index best = 0;
    outlierness_standard(model, points.row(i).transpose()).minCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

/// Replaces every class by `per_class` k-means centroids of its members.
/// The result is labeled by class.
inline Dataset reduce_support(const Dataset& data, std::size_t per_class, std::uint64_t seed) {
  data.validate();
  const Assignment& labels = data.require_labels("reduce_support");
  const std::size_t classes = data.label_count();
  Dataset out;
  out.points.resize(static_cast<Eigen::Index>(classes * per_class), data.points.cols());
  out.labels.emplace();
  Eigen::Index row = 0;
  for (std::size_t y = 0; y < classes; ++y) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == static_cast<int>(y)) members.push_back(i);
    }
    if (members.size() < per_class) {
      throw DomainError("reduce_support: class " + std::to_string(y) + " has " + std::to_string(members.size()) +
                        " points, fewer than " + std::to_string(per_class));
    }
    const LloydResult fit = train_standard(Dataset{gather_rows(data.points, members), std::nullopt}, per_class, seed);
    for (Eigen::Index c = 0; c < fit.model.centroids.rows(); ++c) {
      out.points.row(row++) = fit.model.centroids.row(c);
      out.labels->push_back(static_cast<int>(y));
    }
  }
  return out;
}

}  // namespace neon
