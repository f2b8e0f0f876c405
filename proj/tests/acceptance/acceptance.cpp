// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../test_util.hpp"
#include "neon/neon.hpp"

namespace {

using namespace neon;
using testing::random_index;
using testing::random_vector;

// Pinned tolerances.
constexpr double kLogitTol = 1e-9;
constexpr double kPowerTol = 1e-9;
constexpr double kNaiveImprovedTol = 1e-6;
constexpr double kConservationTol = 1e-9;
constexpr double kGradientRelTol = 1e-4;
constexpr double kFlipAreaRatio = 0.9;
constexpr double kBetaTarget = 0.9;
constexpr double kBetaTol = 0.01;
constexpr double kIgRelTol = 1e-3;
constexpr double kIsolationTol = 1e-9;
constexpr double kC1Seconds = 1.0;
constexpr double kC9Seconds = 30.0;
// Exact up to summation order: a few units in the last place per term.
constexpr double kUlps = 8.0;

double ulp_bound(double value, std::size_t terms) {
  return kUlps * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value)) * static_cast<double>(std::max<std::size_t>(1, terms));
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Stiffness uniform_beta(std::mt19937_64& rng, double lo, double hi) {
  return Stiffness(std::uniform_real_distribution<double>(lo, hi)(rng));
}

// ---------------------------------------------------------------------------

Outcome c1() {
  std::mt19937_64 rng(1);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto k = static_cast<Eigen::Index>(2 + random_index(rng, 6));
    const Vector o = random_vector(rng, k, -3, 3);
    const Stiffness beta = uniform_beta(rng, 0.1, 5.0);
    const std::size_t c = random_index(rng, static_cast<std::size_t>(k));
    const double reference = testing::logit_from_probability(o, c, beta.value());
    worst = std::max(worst, std::abs(logit(o, c, beta) - reference));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < kLogitTol && secs < kC1Seconds, fmt("max gap %.3g", worst) + fmt(", %.3f s", secs)};
}

Outcome c2() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const KernelModel m = testing::random_kernel(rng, 2 + static_cast<int>(random_index(rng, 4)), 2, 4,
                                                 std::uniform_real_distribution<double>(0.2, 3.0)(rng));
    const Vector x = random_vector(rng, 2, -2, 2);
    const Stiffness beta = uniform_beta(rng, 0.1, 5.0);
    worst = std::max(worst, (power_assignment(m, x, beta) - soft_assignment(outlierness_kernel(m, x), beta)).cwiseAbs().maxCoeff());
  }
  return {worst < kPowerTol, fmt("max gap %.3g", worst)};
}

Outcome c3() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  Eigen::Index largest = 0;
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(random_index(rng, 2));
    const KernelModel m = testing::random_kernel(rng, k, 2, 12 / k, std::uniform_real_distribution<double>(0.3, 3.0)(rng));
    largest = std::max(largest, m.support.rows());
    const std::size_t c = random_index(rng, static_cast<std::size_t>(k));
    const Stiffness beta = uniform_beta(rng, 0.1, 5.0);
    const Vector x = random_vector(rng, 2, -2, 2);
    worst = std::max(worst, std::abs(evaluate(build_kernel_naive(m, c, beta), x) - evaluate(build_kernel_improved(m, c, beta), x)));
  }
  return {worst < kNaiveImprovedTol && largest <= 12, fmt("max gap %.3g", worst) + fmt(", largest M %.0f", static_cast<double>(largest))};
}

Outcome c4() {
  std::mt19937_64 rng(4);
  int cases = 0;
  int violations = 0;
  for (int m : {2, 5, 10}) {
    for (double delta : {0.1, 1.0}) {
      for (double b : {1.0, 10.0, 100.0}) {
        const double slack = 1.0 + (m - 1) * std::exp(-b * delta);
        for (int trial = 0; trial < 50; ++trial) {
          // Trial 0 puts every competitor exactly delta above the winner.
          Vector a = Vector::Constant(m, delta);
          if (trial > 0) a += random_vector(rng, m, 0.0, 2.0);
          const auto w = static_cast<Eigen::Index>(random_index(rng, static_cast<std::size_t>(m)));
          a[w] = 0.0;
          const double p = soft_min_weights(a, Stiffness(b))[w];
          const double theta = soft_min((a.array() - a[w]).matrix(), Stiffness(b));
          if (!(p >= 1.0 / slack)) ++violations;
          if (!(std::abs(theta) <= std::log(slack) / b)) ++violations;
          ++cases;
        }
      }
    }
  }
  return {violations == 0, std::to_string(cases) + " cases, " + std::to_string(violations) + " violations"};
}

std::vector<ClusterModel> blob_models(const Dataset& data) {
  const StandardModel s = train_standard(data, 3, 0).model;
  const Dataset support = reduce_support(data, 4, 0);
  const KernelModel k = make_kernel_model(support.points, *support.labels, calibrate_gamma_self_similarity(support.points, 0.9));
  const DeepFit d = train_deep(data, DeepTrainConfig{{2, 8, 3}, one_hot_centroids(3, 3, 2.0), 100, 1e-2, 1, std::nullopt});
  return {s, k, d.model};
}

Outcome c5() {
  const Dataset data = make_blobs(30, 3, 2, 1.0, 5);
  double end_to_end = 0.0;
  double pool_excess = 0.0;  // pooling gap beyond the ulp bound; 0 when exact
  for (const ClusterModel& model : blob_models(data)) {
    for (std::size_t c = 0; c < 3; ++c) {
      const LayeredNetwork net = build_network(model, c, Stiffness(2.0));
      const RuleSpec rules = default_rules(net);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const RelevanceState st = explain(net, data.point(i), rules);
        end_to_end = std::max(end_to_end, std::abs(conservation_gap(st)));
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
          const bool pool = std::holds_alternative<SoftMinPoolLayer>(net.layers[l]) || std::holds_alternative<SoftMaxPoolLayer>(net.layers[l]);
          if (!pool) continue;
          const double top = st.relevance[l + 1].sum();
          const double gap = std::abs(st.relevance[l].sum() - top);
          pool_excess = std::max(pool_excess, gap - ulp_bound(top, static_cast<std::size_t>(st.relevance[l].size())));
        }
      }
    }
  }
  return {end_to_end < kConservationTol && pool_excess <= 0.0, fmt("end-to-end max gap %.3g", end_to_end) +
                                                                    (pool_excess <= 0.0 ? ", pooling exact" : ", pooling off")};
}

LayeredNetwork random_network(std::mt19937_64& rng, int family, bool smooth) {
  const Stiffness beta = uniform_beta(rng, 0.3, 3.0);
  switch (family) {
    case 0: return build_standard(testing::random_standard(rng, 3, 3), random_index(rng, 3), beta);
    case 1: return build_kernel_improved(testing::random_kernel(rng, 3, 3, 3, 0.8), random_index(rng, 3), beta);
    case 2: return build_kernel_naive(testing::random_kernel(rng, 3, 3, 3, 0.8), random_index(rng, 3), beta);
    default: {
      DeepModel d = testing::random_deep(rng, {3, 6, 4}, 3);
      if (smooth) {
        for (auto& layer : d.feature_map) layer.activation = Activation::identity;
      }
      return build_deep(d, random_index(rng, 3), beta);
    }
  }
}

Outcome c6() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    for (int family = 0; family < 4; ++family) {
      const LayeredNetwork net = random_network(rng, family, false);
      const Vector x = random_vector(rng, 3, -1.5, 1.5);
      const Vector fd = testing::finite_difference_gradient([&](const Vector& p) { return evaluate(net, p); }, x);
      worst = std::max(worst, testing::relative_error(gradient(net, x), fd));
    }
  }
  return {worst < kGradientRelTol, fmt("max relative error %.3g over 400 nets", worst)};
}

double deep_gradient_error(const Dataset& data, DeepModel model) {
  const auto grad = deep_loss_gradient(model, data);
  double worst = 0.0;
  for (std::size_t l = 0; l < model.feature_map.size(); ++l) {
    DeepLayer& layer = model.feature_map[l];
    Vector analytic(layer.weights.size() + layer.bias.size());
    Vector numeric(analytic.size());
    Eigen::Index p = 0;
    auto probe = [&](double& param, double g) {
      const double saved = param;
      param = saved + 1e-5;
      const double up = deep_loss(model, data);
      param = saved - 1e-5;
      const double down = deep_loss(model, data);
      param = saved;
      analytic[p] = g;
      numeric[p++] = (up - down) / 2e-5;
    };
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) probe(layer.weights(r, c), grad[l].weights(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) probe(layer.bias[r], grad[l].bias[r]);
    worst = std::max(worst, testing::relative_error(analytic, numeric));
  }
  return worst;
}

Outcome c7() {
  const Dataset data = make_blobs(30, 3, 2, 1.0, 7);
  const DeepFit fit = train_deep(data, DeepTrainConfig{{2, 8, 8, 3}, one_hot_centroids(3, 3), 200, 1e-2, 7, std::nullopt});
  int increases = 0;
  for (std::size_t t = 1; t < fit.loss.size(); ++t) {
    if (fit.loss[t] > fit.loss[t - 1]) ++increases;
  }
  std::mt19937_64 rng(7);
  const double grad_err = std::max(deep_gradient_error(data, testing::random_deep(rng, {2, 8, 8, 3}, 3)), deep_gradient_error(data, fit.model));
  return {increases == 0 && fit.loss.size() == 201 && grad_err < kGradientRelTol,
          fmt("loss %.4g", fit.loss.front()) + fmt(" -> %.4g", fit.loss.back()) + ", " + std::to_string(increases) + " increases" +
              fmt(", gradient relative error %.3g", grad_err)};
}

Outcome c8() {
  const Dataset data = make_blobs(40, 2, 2, 1.0, 8, 10.0);
  const Stiffness gamma(0.1);
  int recovered = 0;
  int fixed = 0;
  int max_iter = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Assignment init(data.size());
    for (auto& a : init) a = static_cast<int>(random_index(rng, 2));
    const KernelEmResult fit = train_kernel_em(data, 2, gamma, init, 20);
    max_iter = std::max(max_iter, fit.iterations);
    if (fit.converged && purity(fit.assignment, *data.labels) == 1.0) ++recovered;
    const KernelEmResult again = train_kernel_em(data, 2, gamma, fit.assignment, 20);
    if (again.iterations == 1 && again.assignment == fit.assignment) ++fixed;
  }
  return {recovered == 10 && fixed == 10, std::to_string(recovered) + "/10 purity 1, " + std::to_string(fixed) +
                                              "/10 fixed points, at most " + std::to_string(max_iter) + " iterations"};
}

Outcome c9() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = make_blobs(100, 3, 2, 1.0, 9);
  const ClusterModel model = train_standard(data, 3, 9).model;
  const Stiffness beta = calibrate_beta(model, data.points, 0.8, 1e-3);
  std::vector<LayeredNetwork> nets;
  for (std::size_t c = 0; c < 3; ++c) nets.push_back(build_network(model, c, beta));
  const Assignment owner = assign(model, data.points);

  std::vector<std::optional<Vector>> roots(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const LayeredNetwork& net = nets[static_cast<std::size_t>(owner[i])];
    if (evaluate(net, data.point(i)) <= 0.0) return;
    try {
      roots[i] = find_root(net, data.point(i)).point;
    } catch (const RootNotFound&) {
    }
  });
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (roots[i]) used.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(used.size());
  Matrix points(n, 2), root_rows(n, 2), neon_rel(n, 2), sa_rel(n, 2);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = used[static_cast<std::size_t>(r)];
    const LayeredNetwork& net = nets[static_cast<std::size_t>(owner[i])];
    points.row(r) = data.points.row(static_cast<Eigen::Index>(i));
    root_rows.row(r) = roots[i]->transpose();
    neon_rel.row(r) = explain(net, data.point(i), default_rules(net)).input().transpose();
    sa_rel.row(r) = explain_sa(net, data.point(i)).transpose();
  }
  const LogitFn logit = [&](std::size_t r, const Vector& x) {
    return evaluate(nets[static_cast<std::size_t>(owner[used[r]])], x);
  };
  const std::size_t batch = default_flip_batch(static_cast<std::size_t>(points.size()));
  const double neon_area = curve_area(pixel_flip(logit, points, neon_rel, root_rows, batch, "neon"));
  const double sa_area = curve_area(pixel_flip(logit, points, sa_rel, root_rows, batch, "sa"));
  const double random_area = curve_area(random_flip_curve(logit, points, root_rows, batch, 100, 9).mean);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {used.size() >= 270 && neon_area <= kFlipAreaRatio * random_area && secs < kC9Seconds,
          std::to_string(used.size()) + " points" + fmt(", areas neon %.4g", neon_area) + fmt(" random %.4g", random_area) +
              fmt(" (ratio %.3f)", neon_area / random_area) + fmt(", sa %.4g reported", sa_area) + fmt(", %.1f s", secs)};
}

Outcome c10() {
  const Dataset data = make_blobs(50, 3, 2, 1.0, 10);
  const ClusterModel model = train_standard(data, 3, 10).model;
  const Stiffness beta = calibrate_beta(model, data.points, kBetaTarget, 1e-3);
  const double top = mean_top_probability(outlier_score_matrix(model, data.points), beta);

  const Dataset support = reduce_support(data, 5, 10);
  const Stiffness g_self = calibrate_gamma_self_similarity(support.points, 0.9);
  const double self = self_similarity_ratio(pairwise_squared_distances(support.points), g_self.value());

  const std::size_t k = data.size() / 3;
  const Stiffness g_knn = calibrate_gamma_knn_mass(data.points, k, 0.5);
  const double knn = knn_mass_ratio(pairwise_squared_distances(data.points), k, g_knn.value());

  const bool pass = std::abs(top - kBetaTarget) <= kBetaTol && std::abs(self - 0.9) <= kSelfSimilarityTolerance &&
                    std::abs(knn - 0.5) <= kKnnMassTolerance;
  return {pass, fmt("mean top probability %.5f", top) + fmt(", self-similarity %.6f", self) + fmt(", knn mass %.5f", knn)};
}

Outcome c11() {
  std::mt19937_64 rng(11);
  double sr_excess = 0.0;
  double ig_worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const LayeredNetwork net = random_network(rng, t % 4, true);
    const Vector x = random_vector(rng, 3, -1.5, 1.5);
    const double f = evaluate(net, x);
    if (f <= 0.0) {
      // Root is x itself; any reference on the far side still tests completeness.
      const RootPoint ref{random_vector(rng, 3), 0.0, 0};
      const IntegratedGradients ig = explain_ig(net, x, ref, 1024);
      ig_worst = std::max(ig_worst, ig.completeness_gap / std::abs(f));
      continue;
    }
    const RootPoint root = find_root(net, x);
    sr_excess = std::max(sr_excess, std::abs(explain_sr(net, x, root).sum() - f) - ulp_bound(f, 3));
    const IntegratedGradients ig = explain_ig(net, x, root, 1024);
    ig_worst = std::max(ig_worst, ig.completeness_gap / std::abs(f));
  }
  return {sr_excess <= 0.0 && ig_worst <= kIgRelTol,
          std::string(sr_excess <= 0.0 ? "SR exact" : "SR off") + fmt(", worst IG gap %.3g |f|", ig_worst)};
}

Outcome c12() {
  const Dataset data = make_blobs(25, 4, 3, 1.0, 12);
  const StandardModel model = train_standard(data, 4, 12).model;
  double worst = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    const LayeredNetwork net = build_standard(model, c, Stiffness(1.0));
    const RuleSpec rules = default_rules(net);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const ForwardTrace trace = forward(net, data.point(i));
      Vector sum = Vector::Zero(3);
      for (std::size_t k = 0; k < 4; ++k) {
        if (k != c) sum += isolate_competitor(net, trace, rules, k);
      }
      worst = std::max(worst, (sum - propagate(net, trace, rules).input()).cwiseAbs().maxCoeff());
    }
  }
  return {worst < kIsolationTol, fmt("max gap %.3g", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"logit equivalence", c1},
      {"power assignment equivalence", c2},
      {"naive vs improved kernel network", c3},
      {"winner probability and pooling bounds", c4},
      {"conservation", c5},
      {"gradient vs finite differences", c6},
      {"deep training", c7},
      {"kernel EM recovery", c8},
      {"pixel-flipping sanity", c9},
      {"calibration", c10},
      {"SR and IG completeness", c11},
      {"competitor isolation", c12},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) ++failures;
    std::printf("%s %2zu %s: %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
