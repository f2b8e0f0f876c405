#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>

#include "neon/dataset.hpp"

namespace neon {

/// Deterministic blob centres: on a circle in the first two coordinates with
/// neighbouring centres `separation` apart (on a line when dim == 1).
inline Matrix blob_centers(std::size_t k, std::size_t dim, double separation) {
  Matrix centers = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  if (k < 2) return centers;
  if (dim == 1) {
    for (std::size_t c = 0; c < k; ++c) centers(static_cast<Eigen::Index>(c), 0) = (static_cast<double>(c) - 0.5 * static_cast<double>(k - 1)) * separation;
    return centers;
  }
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
  for (std::size_t c = 0; c < k; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    centers(static_cast<Eigen::Index>(c), 0) = radius * std::cos(angle);
    centers(static_cast<Eigen::Index>(c), 1) = radius * std::sin(angle);
  }
  return centers;
}

/// `n_per_cluster` isotropic Gaussian samples (std `spread`) around each
/// centre, grouped by cluster and labeled with it.
inline Dataset make_blobs(std::size_t n_per_cluster, std::size_t k, std::size_t dim, double spread, std::uint64_t seed,
                          double separation = 4.0) {
  if (n_per_cluster < 1 || k < 1 || dim < 1) throw DomainError("make_blobs: sizes must be positive");
  if (!(spread >= 0.0)) throw DomainError("make_blobs: spread must be nonnegative");
  const Matrix centers = blob_centers(k, dim, separation);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data{Matrix(static_cast<Eigen::Index>(n_per_cluster * k), static_cast<Eigen::Index>(dim)), Assignment{}};
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n_per_cluster; ++i, ++row) {
      for (std::size_t d = 0; d < dim; ++d) {
        data.points(row, static_cast<Eigen::Index>(d)) = centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) + spread * normal(rng);
      }
      data.labels->push_back(static_cast<int>(c));
    }
  }
  return data;
}

}  // namespace neon
