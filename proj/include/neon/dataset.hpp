#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "neon/error.hpp"
#include "neon/pooling.hpp"

namespace neon {

using Assignment = std::vector<int>;

/// N x D points with optional integer labels in [0, K).
struct Dataset {
  Matrix points;
  std::optional<Assignment> labels;

  std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points.cols()); }

  Vector point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Number of distinct label values, i.e. max label + 1.
  std::size_t label_count() const {
    if (!labels || labels->empty()) return 0;
    return static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
  }

  void validate() const {
    if (points.rows() < 1 || points.cols() < 1) throw DomainError("dataset must have N >= 1 and D >= 1");
    if (!points.allFinite()) throw DomainError("dataset contains non-finite values");
    if (labels) {
      if (labels->size() != size()) throw DomainError("label count does not match point count");
      for (int y : *labels) {
        if (y < 0) throw DomainError("labels must be nonnegative, got " + std::to_string(y));
      }
    }
  }

  const Assignment& require_labels(const char* op) const {
    if (!labels) throw DomainError(std::string(op) + ": dataset has no labels");
    return *labels;
  }
};

inline double squared_distance(const VectorRef& a, const VectorRef& b) { return (a - b).squaredNorm(); }

/// Rows of `points` selected by `index`.
inline Matrix gather_rows(const Matrix& points, const std::vector<std::size_t>& index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), points.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = points.row(static_cast<Eigen::Index>(index[r]));
  }
  return out;
}

}  // namespace neon
