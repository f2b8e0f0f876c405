#pragma once

// Gaussian kernel k-means with unit-norm centroids in feature space.
//
//   inlierness  i_k(x) = Z_k^-1 sum_{j in C_k} exp(-g ||x - x_j||^2)
//   outlierness o_k(x) = -g^-1 log i_k(x) = min^g_{j in C_k}{||x - x_j||^2 + b_k},  b_k = g^-1 log Z_k
//   Z_k = (sum_{j,j' in C_k} exp(-g ||x_j - x_j'||^2))^(1/2)

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "neon/dataset.hpp"

namespace neon {

inline constexpr std::size_t kDefaultKernelMatrixCap = 2048;

struct KernelModel {
  Matrix support;
  /// Cluster index of every support row.
  Assignment membership;
  Stiffness gamma{1.0};
  /// Z_k, one per cluster.
  Vector normalizers;

  std::size_t clusters() const noexcept { return static_cast<std::size_t>(normalizers.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(support.cols()); }

  std::vector<std::size_t> members(std::size_t k) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < membership.size(); ++j) {
      if (membership[j] == static_cast<int>(k)) out.push_back(j);
    }
    return out;
  }

  /// b_k = -g^-1 log Z_k^-1.
  double bias(std::size_t k) const { return std::log(normalizers[static_cast<Eigen::Index>(k)]) / gamma.value(); }
};

inline double gaussian_kernel(double squared_dist, Stiffness gamma) { return std::exp(-gamma.value() * squared_dist); }

/// Builds a model from support points and memberships, computing every Z_k.
inline KernelModel make_kernel_model(Matrix support, Assignment membership, Stiffness gamma) {
  if (gamma.is_infinite()) throw DomainError("kernel model: gamma must be finite");
  if (support.rows() < 1 || static_cast<std::size_t>(support.rows()) != membership.size()) {
    throw DomainError("kernel model: support/membership size mismatch");
  }
  int k_count = 0;
  for (int m : membership) {
    if (m < 0) throw DomainError("kernel model: negative cluster index");
    k_count = std::max(k_count, m + 1);
  }
  KernelModel model{std::move(support), std::move(membership), gamma, Vector::Zero(k_count)};
  for (int k = 0; k < k_count; ++k) {
    const auto idx = model.members(static_cast<std::size_t>(k));
    if (idx.empty()) throw DomainError("kernel model: cluster " + std::to_string(k) + " is empty");
    double total = 0.0;
    for (std::size_t a : idx) {
      for (std::size_t b : idx) {
        total += gaussian_kernel(
            (model.support.row(static_cast<Eigen::Index>(a)) - model.support.row(static_cast<Eigen::Index>(b))).squaredNorm(),
            gamma);
      }
    }
    model.normalizers[k] = std::sqrt(total);
  }
  return model;
}

inline void require_dim(const KernelModel& model, const VectorRef& x, const char* op) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw DomainError(std::string(op) + ": dimension mismatch");
}

/// Parzen-window inlierness, evaluated directly (may underflow to 0 far from the data).
inline Vector inlierness_kernel(const KernelModel& model, const VectorRef& x) {
  require_dim(model, x, "inlierness_kernel");
  Vector in = Vector::Zero(static_cast<Eigen::Index>(model.clusters()));
  for (Eigen::Index j = 0; j < model.support.rows(); ++j) {
    in[model.membership[static_cast<std::size_t>(j)]] +=
        gaussian_kernel((x.transpose() - model.support.row(j)).squaredNorm(), model.gamma);
  }
  return in.cwiseQuotient(model.normalizers);
}

/// Outlierness as soft-min pooling over biased squared distances (stable form).
inline Vector outlierness_kernel(const KernelModel& model, const VectorRef& x) {
  require_dim(model, x, "outlierness_kernel");
  Vector o(static_cast<Eigen::Index>(model.clusters()));
  for (std::size_t k = 0; k < model.clusters(); ++k) {
    const auto idx = model.members(k);
    Vector d(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      d[static_cast<Eigen::Index>(r)] =
          (x.transpose() - model.support.row(static_cast<Eigen::Index>(idx[r]))).squaredNorm() + model.bias(k);
    }
    o[static_cast<Eigen::Index>(k)] = soft_min(d, model.gamma);
  }
  return o;
}

/// i_c^(b/g) / sum_k i_k^(b/g), computed from inlierness (not from outlierness).
inline Vector power_assignment(const KernelModel& model, const VectorRef& x, Stiffness beta) {
  const Vector in = inlierness_kernel(model, x);
  const double top = in.maxCoeff();
  if (!(top > 0.0)) throw DomainError("power_assignment: inlierness underflowed to zero");
  Vector p(in.size());
  if (beta.is_infinite()) {
    for (Eigen::Index k = 0; k < in.size(); ++k) p[k] = in[k] == top ? 1.0 : 0.0;
  } else {
    const double power = beta.value() / model.gamma.value();
    for (Eigen::Index k = 0; k < in.size(); ++k) p[k] = std::pow(in[k] / top, power);
  }
  return p / p.sum();
}

struct KernelEmResult {
  KernelModel model;
  Assignment assignment;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Matrix kernel_matrix(const Matrix& points, Stiffness gamma) {
  const Eigen::Index n = points.rows();
  Matrix km(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    km(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      km(a, b) = km(b, a) = gaussian_kernel((points.row(a) - points.row(b)).squaredNorm(), gamma);
    }
  }
  return km;
}

}  // namespace detail

/// Leave-one-out scores <Phi(x_l), mu_k^(-l)> for every point l and cluster k
/// (N x K). A point's own cluster is scored without the point; when the point
/// is that cluster's only member the score is -inf.
inline Matrix leave_one_out_scores(const Matrix& kernel, const Assignment& assignment, std::size_t k) {
  const auto n = static_cast<std::size_t>(kernel.rows());
  // Off-diagonal row sums, accumulated directly so tiny kernel values keep
  // their precision in the leave-one-out numerator.
  Matrix row_sums = Matrix::Zero(kernel.rows(), static_cast<Eigen::Index>(k));
  Vector cluster_mass = Vector::Zero(static_cast<Eigen::Index>(k));
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t l = 0; l < n; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != l) row_sums(li, assignment[j]) += kernel(li, static_cast<Eigen::Index>(j));
    }
    ++sizes[static_cast<std::size_t>(assignment[l])];
  }
  for (std::size_t l = 0; l < n; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    cluster_mass[assignment[l]] += row_sums(li, assignment[l]) + kernel(li, li);
  }

  Matrix scores(kernel.rows(), static_cast<Eigen::Index>(k));
  for (std::size_t l = 0; l < n; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      if (static_cast<int>(c) != assignment[l]) {
        scores(li, ci) = sizes[c] == 0 ? -std::numeric_limits<double>::infinity()
                                       : row_sums(li, ci) / std::sqrt(cluster_mass[ci]);
      } else if (sizes[c] == 1) {
        scores(li, ci) = -std::numeric_limits<double>::infinity();
      } else {
        const double mass = cluster_mass[ci] - 2.0 * row_sums(li, ci) - kernel(li, li);
        scores(li, ci) = row_sums(li, ci) / std::sqrt(mass);
      }
    }
  }
  return scores;
}

/// Leave-one-out EM for kernel k-means. Each sweep scores all points against
/// the leave-one-out centroids of the current assignment and reassigns them
/// together; sweeps repeat until nothing moves or `max_iter` is reached.
/// The returned model uses the full final memberships.
inline KernelEmResult train_kernel_em(const Dataset& data, std::size_t k, Stiffness gamma, const Assignment& init,
                                      int max_iter, std::size_t max_points = kDefaultKernelMatrixCap) {
  data.validate();
  const std::size_t n = data.size();
  if (gamma.is_infinite()) throw DomainError("train_kernel_em: gamma must be finite");
  if (k < 2) throw DomainError("train_kernel_em: k must be at least 2");
  if (n > max_points) {
    throw ResourceError("train_kernel_em: N = " + std::to_string(n) + " exceeds the kernel matrix cap of " +
                        std::to_string(max_points));
  }
  if (init.size() != n) throw DomainError("train_kernel_em: init size does not match N");
  std::vector<std::size_t> sizes(k, 0);
  for (int a : init) {
    if (a < 0 || static_cast<std::size_t>(a) >= k) throw DomainError("train_kernel_em: init label out of range");
    ++sizes[static_cast<std::size_t>(a)];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) throw DomainError("train_kernel_em: init leaves cluster " + std::to_string(c) + " empty");
  }

  const Matrix kernel = detail::kernel_matrix(data.points, gamma);
  KernelEmResult result;
  Assignment assignment = init;
  for (int iter = 1; iter <= max_iter; ++iter) {
    const Matrix scores = leave_one_out_scores(kernel, assignment, k);
    Assignment next(n);
    std::vector<double> best_score(n);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t l = 0; l < n; ++l) {
      Eigen::Index best = 0;
      best_score[l] = scores.row(static_cast<Eigen::Index>(l)).maxCoeff(&best);
      next[l] = static_cast<int>(best);
      ++sizes[static_cast<std::size_t>(best)];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t worst = n;
      for (std::size_t l = 0; l < n; ++l) {
        if (sizes[static_cast<std::size_t>(next[l])] < 2) continue;
        if (worst == n || best_score[l] < best_score[worst]) worst = l;
      }
      --sizes[static_cast<std::size_t>(next[worst])];
      next[worst] = static_cast<int>(c);
      sizes[c] = 1;
    }
    result.iterations = iter;
    const bool changed = next != assignment;
    assignment = std::move(next);
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  result.model = make_kernel_model(data.points, assignment, gamma);
  result.assignment = std::move(assignment);
  return result;
}

}  // namespace neon
