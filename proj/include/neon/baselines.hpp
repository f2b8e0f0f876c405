#pragma once

// Explainers that only look at f_c as a function: sensitivity (SA),
// gradient x input (GI), surrogate decomposition against a root point (SR)
// and integrated gradients from the root point (IG).

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

#include "neon/network.hpp"

namespace neon {

/// Analytic gradient of the network output w.r.t. its input. Requires
/// finite stiffness in every pooling layer that is scaled by beta.
inline Vector gradient(const LayeredNetwork& net, const VectorRef& x) {
  const ForwardTrace trace = forward(net, x);
  Vector g = Vector::Ones(1);
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const Vector& a = trace.activations[l];
    const Layer& layer = net.layers[l];
    Vector lower = Vector::Zero(a.size());
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
      lower = lin->weights.transpose() * g;
    } else if (const auto* dist = std::get_if<SquaredDistanceLayer>(&layer)) {
      for (Eigen::Index j = 0; j < dist->centers.rows(); ++j) lower += 2.0 * g[j] * (a - dist->centers.row(j).transpose());
    } else if (const auto* pool = std::get_if<SoftMinPoolLayer>(&layer)) {
      if (pool->scale_by_beta && pool->beta.is_infinite()) throw DomainError("gradient: hard top pooling is not differentiable");
      const double scale = pool->scale_by_beta ? pool->beta.value() : 1.0;
      for (std::size_t gi = 0; gi < pool->groups.size(); ++gi) {
        const Vector p = soft_min_weights(gather(a, pool->groups[gi]), pool->beta);
        for (std::size_t r = 0; r < pool->groups[gi].size(); ++r) {
          lower[static_cast<Eigen::Index>(pool->groups[gi][r])] += scale * g[static_cast<Eigen::Index>(gi)] * p[static_cast<Eigen::Index>(r)];
        }
      }
    } else if (const auto* pool = std::get_if<SoftMaxPoolLayer>(&layer)) {
      for (std::size_t gi = 0; gi < pool->groups.size(); ++gi) {
        const Vector p = soft_max_weights(gather(a, pool->groups[gi]), pool->beta);
        for (std::size_t r = 0; r < pool->groups[gi].size(); ++r) {
          lower[static_cast<Eigen::Index>(pool->groups[gi][r])] += g[static_cast<Eigen::Index>(gi)] * p[static_cast<Eigen::Index>(r)];
        }
      }
    } else {
      const auto& el = std::get<ElementwiseLayer>(layer);
      lower = g.cwiseProduct(a.unaryExpr([&](double v) { return activate_derivative(el.activation, v); }));
    }
    g = std::move(lower);
  }
  return g;
}

/// Sensitivity analysis: squared gradient.
inline Vector explain_sa(const LayeredNetwork& net, const VectorRef& x) { return gradient(net, x).array().square(); }

/// Gradient x input.
inline Vector explain_gi(const LayeredNetwork& net, const VectorRef& x) { return gradient(net, x).cwiseProduct(x); }

/// Nearest point found with f <= 0.
struct RootPoint {
  Vector point;
  double achieved_f = 0.0;
  int iterations = 0;
};

class RootNotFound : public std::runtime_error {
 public:
  RootNotFound(const std::string& what, RootPoint best) : std::runtime_error(what), best_(std::move(best)) {}
  const RootPoint& best() const noexcept { return best_; }

 private:
  RootPoint best_;
};

struct RootSearchOptions {
  /// Budget of gradient steps per local descent, over all penalty rounds.
  int max_iter = 5000;
  /// Initial penalty weight lambda; doubled whenever a round stalls infeasible.
  double initial_penalty = 1.0;
  /// Initial step of the backtracking line search.
  double initial_step = 1.0;
  /// Feasibility threshold on f.
  double tolerance = 1e-6;
  /// Random ray directions scanned for boundary crossings, on top of the
  /// coordinate axes and the descent direction.
  int random_rays = 16;
  /// Boundary crossings used as extra starting points for the local descent.
  int restarts = 4;
  std::uint64_t seed = 0;
};

namespace detail {

// Penalized descent on ||x - xi||^2 + lambda max(0, f(xi))^2 from `start`,
// then Newton steps along the gradient onto f = 0.
inline RootPoint local_root(const LayeredNetwork& net, const Vector& x, const Vector& start, const RootSearchOptions& opt) {
  Vector xi = start;
  double f = evaluate(net, xi);
  double lambda = opt.initial_penalty;
  double step = opt.initial_step;
  auto penalty = [&](const Vector& p, double fp) {
    const double v = std::max(0.0, fp);
    return (p - x).squaredNorm() + lambda * v * v;
  };

  int used = 0;
  Vector grad_f = gradient(net, xi);
  while (used < opt.max_iter) {
    int moves = 0;
    for (; used < opt.max_iter; ++used, ++moves) {
      const Vector grad_p = 2.0 * (xi - x) + 2.0 * lambda * std::max(0.0, f) * grad_f;
      const double gnorm2 = grad_p.squaredNorm();
      if (gnorm2 <= 1e-24 * (1.0 + (xi - x).squaredNorm())) break;
      const double current = penalty(xi, f);
      step = std::min(step * 2.0, 1e6);
      bool moved = false;
      while (step > 1e-18) {
        const Vector trial = xi - step * grad_p;
        const double ft = evaluate(net, trial);
        if (penalty(trial, ft) <= current - 1e-4 * step * gnorm2) {
          xi = trial;
          f = ft;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      grad_f = gradient(net, xi);
      if (moves >= 200) break;
    }
    const double gn = grad_f.norm();
    if ((f <= 0.0 && moves == 0) || (gn > 0.0 && f > 0.0 && f / gn <= 1e-4 * (1.0 + (xi - x).norm())) || lambda > 1e15) break;
    if (f > 0.0) lambda *= 2.0;
    ++used;
  }

  for (int k = 0; k < 50 && f > 0.0; ++k, ++used) {
    grad_f = gradient(net, xi);
    const double gn2 = grad_f.squaredNorm();
    if (gn2 == 0.0) break;
    xi -= (f / gn2) * (1.0 + 1e-12) * grad_f;
    f = evaluate(net, xi);
  }

  // Projection polish: at the optimum xi lies on the ray from x against
  // grad f(xi). Accepted only while it stays feasible and gets closer.
  for (int k = 0; k < 100 && f <= opt.tolerance; ++k, ++used) {
    grad_f = gradient(net, xi);
    const double gn = grad_f.norm();
    if (gn == 0.0) break;
    const Vector u = -grad_f / gn;
    auto along = [&](double t) { return evaluate(net, x + t * u); };
    double hi = std::max((xi - x).norm(), 1e-12);
    if (along(hi) > 0.0) {
      hi *= 1.5;
      if (along(hi) > 0.0) break;
    }
    double lo = 0.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (along(mid) > 0.0 ? lo : hi) = mid;
    }
    const Vector next = x + hi * u;
    const double moved = (next - xi).norm();
    if ((next - x).norm() > (xi - x).norm() + 1e-12 * (1.0 + x.norm())) break;
    xi = next;
    f = evaluate(net, xi);
    if (moved <= 1e-12 * (1.0 + x.norm())) break;
  }
  return RootPoint{xi, f, used};
}

// First point with f <= 0 along x + r u, refined by bisection.
inline std::optional<Vector> ray_crossing(const LayeredNetwork& net, const Vector& x, const Vector& u) {
  const double scale = 1.0 + x.norm();
  double lo = 0.0;
  double hi = 1e-3 * scale;
  while (evaluate(net, x + hi * u) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4 * scale) return std::nullopt;
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (evaluate(net, x + mid * u) > 0.0 ? lo : hi) = mid;
  }
  return Vector(x + hi * u);
}

}  // namespace detail

/// Approximates argmin ||x - xi||^2 subject to f(xi) <= 0. Local penalized
/// descent is started from x and from the nearest boundary crossings found
/// along the coordinate axes, the descent direction and seeded random rays;
/// the nearest feasible result wins.
inline RootPoint find_root(const LayeredNetwork& net, const VectorRef& x_in, const RootSearchOptions& opt = {}) {
  const Vector x = x_in;
  const double f0 = evaluate(net, x);
  if (f0 <= 0.0) return RootPoint{x, f0, 0};

  const Eigen::Index dim = x.size();
  std::vector<Vector> rays;
  for (Eigen::Index d = 0; d < dim; ++d) {
    rays.push_back(Vector::Unit(dim, d));
    rays.push_back(-Vector::Unit(dim, d));
  }
  const Vector g = gradient(net, x);
  if (g.norm() > 0.0) rays.push_back(-g.normalized());
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  for (int r = 0; r < opt.random_rays; ++r) {
    Vector u(dim);
    for (Eigen::Index d = 0; d < dim; ++d) u[d] = normal(rng);
    if (u.norm() > 0.0) rays.push_back(u.normalized());
  }
  std::vector<Vector> crossings;
  for (const Vector& u : rays) {
    if (auto p = detail::ray_crossing(net, x, u)) crossings.push_back(std::move(*p));
  }
  std::sort(crossings.begin(), crossings.end(),
            [&](const Vector& a, const Vector& b) { return (a - x).squaredNorm() < (b - x).squaredNorm(); });

  std::vector<Vector> starts{x};
  for (std::size_t i = 0; i < crossings.size() && static_cast<int>(i) < opt.restarts; ++i) starts.push_back(crossings[i]);

  std::optional<RootPoint> best_feasible;
  RootPoint best_infeasible{x, f0, 0};
  int used = 0;
  for (const Vector& start : starts) {
    RootPoint r = detail::local_root(net, x, start, opt);
    used += r.iterations;
    if (r.achieved_f <= opt.tolerance) {
      if (!best_feasible || (r.point - x).squaredNorm() < (best_feasible->point - x).squaredNorm()) best_feasible = std::move(r);
    } else if (r.achieved_f < best_infeasible.achieved_f) {
      best_infeasible = std::move(r);
    }
  }
  // A crossing itself is feasible; keep it when every descent ended farther away.
  if (!crossings.empty() && (!best_feasible || (crossings.front() - x).squaredNorm() < (best_feasible->point - x).squaredNorm())) {
    best_feasible = RootPoint{crossings.front(), evaluate(net, crossings.front()), 0};
  }
  if (!best_feasible) {
    best_infeasible.iterations = used;
    throw RootNotFound("find_root: no feasible point after " + std::to_string(used) + " iterations (f = " +
                           std::to_string(best_infeasible.achieved_f) + ")",
                       best_infeasible);
  }
  best_feasible->iterations = used;
  return *best_feasible;
}

/// (x - x~)^2 / ||x - x~||^2 * f(x); sums to f(x).
inline Vector explain_sr(const LayeredNetwork& net, const VectorRef& x, const RootPoint& root) {
  const Vector d = x - root.point;
  const double norm2 = d.squaredNorm();
  if (norm2 == 0.0) throw DomainError("explain_sr: input coincides with its root point");
  return d.array().square() / norm2 * evaluate(net, x);
}

struct IntegratedGradients {
  Vector heatmap;
  /// |sum(heatmap) - (f(x) - f(x~))|.
  double completeness_gap = 0.0;
};

/// Midpoint-rule path integral of the gradient along the segment x~ -> x.
inline IntegratedGradients explain_ig(const LayeredNetwork& net, const VectorRef& x, const RootPoint& root, std::size_t steps) {
  if (steps == 0) throw DomainError("explain_ig: steps must be positive");
  const Vector d = x - root.point;
  Vector accum = Vector::Zero(x.size());
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    accum += gradient(net, root.point + t * d);
  }
  IntegratedGradients out{accum.cwiseProduct(d) / static_cast<double>(steps), 0.0};
  out.completeness_gap = std::abs(out.heatmap.sum() - (evaluate(net, x) - evaluate(net, root.point)));
  return out;
}

}  // namespace neon
