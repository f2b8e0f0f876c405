#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "neon/neuralize.hpp"

namespace neon {

/// Mean logit after flipping a growing fraction of (point, feature) pairs.
struct FlipCurve {
  std::vector<double> fractions;
  std::vector<double> mean_logit;
  std::string method;
};

/// Evidence f(i, x) of point i evaluated at (possibly perturbed) input x.
using LogitFn = std::function<double(std::size_t, const Vector&)>;

/// One percent of the (point, feature) pairs, at least one.
inline std::size_t default_flip_batch(std::size_t pairs) { return std::max<std::size_t>(1, pairs / 100); }

/// Flips pairs in the given order (flat index i * D + d), `batch` at a time,
/// replacing x_i[d] by root_i[d]. Returns the mean logit before flipping and
/// after every batch.
inline std::vector<double> flip_in_order(const LogitFn& logit, const Matrix& points, const Matrix& roots,
                                         const std::vector<std::size_t>& order, std::size_t batch) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto dim = static_cast<std::size_t>(points.cols());
  Matrix current = points;
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = logit(i, current.row(static_cast<Eigen::Index>(i)).transpose());
  auto mean = [&] { return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(n); };
  std::vector<double> curve{mean()};
  std::vector<char> dirty(n, 0);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t stop = std::min(order.size(), start + batch);
    for (std::size_t p = start; p < stop; ++p) {
      const auto i = static_cast<Eigen::Index>(order[p] / dim);
      const auto d = static_cast<Eigen::Index>(order[p] % dim);
      current(i, d) = roots(i, d);
      dirty[static_cast<std::size_t>(i)] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!dirty[i]) continue;
      f[i] = logit(i, current.row(static_cast<Eigen::Index>(i)).transpose());
      dirty[i] = 0;
    }
    curve.push_back(mean());
  }
  return curve;
}

inline std::vector<double> flip_fractions(std::size_t pairs, std::size_t batch) {
  std::vector<double> fr{0.0};
  for (std::size_t done = 0; done < pairs;) {
    done = std::min(pairs, done + batch);
    fr.push_back(static_cast<double>(done) / static_cast<double>(pairs));
  }
  return fr;
}

namespace detail {

inline void check_flip_shapes(const Matrix& points, const Matrix& roots, std::size_t batch) {
  if (points.rows() < 1 || points.cols() < 1) throw DomainError("pixel_flip: no points");
  if (roots.rows() != points.rows() || roots.cols() != points.cols()) throw DomainError("pixel_flip: roots shape mismatch");
  if (batch == 0) throw DomainError("pixel_flip: batch must be positive");
}

}  // namespace detail

/// Pixel-flipping with one global ordering of all (point, feature) pairs by
/// descending relevance; ties go to the lower (point, feature) index.
inline FlipCurve pixel_flip(const LogitFn& logit, const Matrix& points, const Matrix& explanations, const Matrix& roots,
                            std::size_t batch, std::string method) {
  detail::check_flip_shapes(points, roots, batch);
  if (explanations.rows() != points.rows() || explanations.cols() != points.cols()) {
    throw DomainError("pixel_flip: explanations shape mismatch");
  }
  const std::size_t pairs = static_cast<std::size_t>(points.size());
  std::vector<std::size_t> order(pairs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double* rel = explanations.data();  // row-major: flat index i * D + d
  std::stable_sort(order.begin(), order.end(), [rel](std::size_t a, std::size_t b) { return rel[a] > rel[b]; });
  return FlipCurve{flip_fractions(pairs, batch), flip_in_order(logit, points, roots, order, batch), std::move(method)};
}

struct RandomFlipCurve {
  FlipCurve mean;
  /// Standard error of the mean at every fraction.
  std::vector<double> standard_error;
};

/// Average of `orders` uniformly random flip orders (the "random" control).
inline RandomFlipCurve random_flip_curve(const LogitFn& logit, const Matrix& points, const Matrix& roots, std::size_t batch,
                                         std::size_t orders, std::uint64_t seed) {
  detail::check_flip_shapes(points, roots, batch);
  if (orders == 0) throw DomainError("random_flip_curve: need at least one order");
  const std::size_t pairs = static_cast<std::size_t>(points.size());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(pairs);
  std::vector<double> sum, sum_sq;
  for (std::size_t r = 0; r < orders; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto curve = flip_in_order(logit, points, roots, order, batch);
    if (sum.empty()) sum.assign(curve.size(), 0.0), sum_sq.assign(curve.size(), 0.0);
    for (std::size_t t = 0; t < curve.size(); ++t) {
      sum[t] += curve[t];
      sum_sq[t] += curve[t] * curve[t];
    }
  }
  RandomFlipCurve out{{flip_fractions(pairs, batch), {}, "random"}, {}};
  const auto m = static_cast<double>(orders);
  for (std::size_t t = 0; t < sum.size(); ++t) {
    const double mu = sum[t] / m;
    out.mean.mean_logit.push_back(mu);
    const double var = orders > 1 ? std::max(0.0, (sum_sq[t] - m * mu * mu) / (m - 1.0)) : 0.0;
    out.standard_error.push_back(std::sqrt(var / m));
  }
  return out;
}

/// Trapezoidal area under the curve over [0, 1].
inline double curve_area(const FlipCurve& curve) {
  double area = 0.0;
  for (std::size_t t = 1; t < curve.fractions.size(); ++t) {
    area += 0.5 * (curve.fractions[t] - curve.fractions[t - 1]) * (curve.mean_logit[t] + curve.mean_logit[t - 1]);
  }
  return area;
}

/// sum_k max_y |C_k & Y_y| / N.
inline double purity(const Assignment& predicted, const Assignment& labels) {
  if (predicted.size() != labels.size() || predicted.empty()) throw DomainError("purity: size mismatch or empty input");
  std::map<int, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < predicted.size(); ++i) ++table[predicted[i]][labels[i]];
  std::size_t hits = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t best = 0;
    for (const auto& [label, count] : counts) best = std::max(best, count);
    hits += best;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

/// A calibration target outside the range reachable within the search limits.
class CalibrationError : public DomainError {
 public:
  CalibrationError(const std::string& what, double low_value, double high_value)
      : DomainError(what), low_value_(low_value), high_value_(high_value) {}
  /// Statistic at the smallest / largest parameter tried.
  double low_value() const noexcept { return low_value_; }
  double high_value() const noexcept { return high_value_; }

 private:
  double low_value_;
  double high_value_;
};

namespace detail {

// Solves stat(p) = target for a non-decreasing stat by doubling/halving from
// p = 1 and bisecting in log p.
template <class Stat>
double solve_increasing(const Stat& stat, double target, double tol, double lo_limit, double hi_limit, const char* what) {
  double lo = 1.0;
  double hi = 1.0;
  double s = stat(1.0);
  if (std::abs(s - target) <= tol) return 1.0;
  if (s < target) {
    while (s < target) {
      if (hi >= hi_limit) {
        throw CalibrationError(std::string(what) + ": target " + std::to_string(target) + " unreachable, statistic only reaches " +
                                   std::to_string(s) + " at " + std::to_string(hi),
                               stat(lo_limit), s);
      }
      lo = hi;
      hi = std::min(hi * 2.0, hi_limit);
      s = stat(hi);
      if (std::abs(s - target) <= tol) return hi;
    }
  } else {
    while (s > target) {
      if (lo <= lo_limit) {
        throw CalibrationError(std::string(what) + ": target " + std::to_string(target) + " unreachable, statistic is still " +
                                   std::to_string(s) + " at " + std::to_string(lo),
                               s, stat(hi_limit));
      }
      hi = lo;
      lo = std::max(lo * 0.5, lo_limit);
      s = stat(lo);
      if (std::abs(s - target) <= tol) return lo;
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    s = stat(mid);
    if (std::abs(s - target) <= tol) return mid;
    (s < target ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace detail

/// Mean over rows of max_k P(k | x) for an N x K matrix of outlier scores.
inline double mean_top_probability(const Matrix& outlier_scores, Stiffness beta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < outlier_scores.rows(); ++i) {
    total += soft_assignment(outlier_scores.row(i).transpose(), beta).maxCoeff();
  }
  return total / static_cast<double>(outlier_scores.rows());
}

inline Matrix outlier_score_matrix(const ClusterModel& model, const Matrix& points) {
  Matrix scores(points.rows(), static_cast<Eigen::Index>(cluster_count(model)));
  for (Eigen::Index i = 0; i < points.rows(); ++i) scores.row(i) = outlierness(model, points.row(i).transpose()).transpose();
  return scores;
}

inline constexpr double kBetaMin = 1e-6;
inline constexpr double kBetaMax = 1e6;

/// Stiffness such that the mean top soft-assignment probability is `target` +- tol.
inline Stiffness calibrate_beta(const Matrix& outlier_scores, double target, double tol) {
  if (outlier_scores.rows() < 1 || outlier_scores.cols() < 2) throw DomainError("calibrate_beta: need points and >= 2 clusters");
  auto stat = [&](double b) { return mean_top_probability(outlier_scores, Stiffness(b)); };
  return Stiffness(detail::solve_increasing(stat, target, tol, kBetaMin, kBetaMax, "calibrate_beta"));
}

inline Stiffness calibrate_beta(const ClusterModel& model, const Matrix& points, double target, double tol) {
  return calibrate_beta(outlier_score_matrix(model, points), target, tol);
}

inline Matrix pairwise_squared_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) d(a, b) = d(b, a) = (points.row(a) - points.row(b)).squaredNorm();
  }
  return d;
}

/// sum_i k(x_i, x_i) / sum_ij k(x_i, x_j).
inline double self_similarity_ratio(const Matrix& sq_dist, double gamma) {
  double total = 0.0;
  for (Eigen::Index a = 0; a < sq_dist.rows(); ++a) {
    for (Eigen::Index b = 0; b < sq_dist.cols(); ++b) total += std::exp(-gamma * sq_dist(a, b));
  }
  return static_cast<double>(sq_dist.rows()) / total;
}

inline constexpr double kGammaMin = 1e-12;
inline constexpr double kGammaMax = 1e12;
inline constexpr double kSelfSimilarityTolerance = 1e-4;
inline constexpr double kKnnMassTolerance = 1e-3;

/// Kernel width whose self-similarities make up `target` of all similarity mass.
inline Stiffness calibrate_gamma_self_similarity(const Matrix& support, double target) {
  const Matrix d = pairwise_squared_distances(support);
  auto stat = [&](double g) { return self_similarity_ratio(d, g); };
  return Stiffness(detail::solve_increasing(stat, target, kSelfSimilarityTolerance, kGammaMin, kGammaMax,
                                            "calibrate_gamma_self_similarity"));
}

/// Mean over points of the similarity mass on the k nearest neighbours
/// divided by the total off-diagonal mass.
inline double knn_mass_ratio(const Matrix& sq_dist, std::size_t k, double gamma) {
  const Eigen::Index n = sq_dist.rows();
  double total = 0.0;
  std::vector<double> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) row.push_back(sq_dist(i, j));
    }
    std::sort(row.begin(), row.end());
    const double nearest = row.front();
    double near = 0.0;
    double all = 0.0;
    for (std::size_t r = 0; r < row.size(); ++r) {
      const double w = std::exp(-gamma * (row[r] - nearest));
      all += w;
      if (r < k) near += w;
    }
    total += near / all;
  }
  return total / static_cast<double>(n);
}

/// Kernel width at which the k nearest neighbours carry `target` of each
/// point's similarity mass, on average.
inline Stiffness calibrate_gamma_knn_mass(const Matrix& points, std::size_t k_neighbors, double target) {
  if (points.rows() < 2) throw DomainError("calibrate_gamma_knn_mass: need at least two points");
  if (k_neighbors < 1) throw DomainError("calibrate_gamma_knn_mass: k must be positive");
  const Matrix d = pairwise_squared_distances(points);
  auto stat = [&](double g) { return knn_mass_ratio(d, k_neighbors, g); };
  return Stiffness(detail::solve_increasing(stat, target, kKnnMassTolerance, kGammaMin, kGammaMax, "calibrate_gamma_knn_mass"));
}

}  // namespace neon
