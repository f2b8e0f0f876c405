// Trains k-means on the bundled blobs, neuralizes it and explains a few
// assignments, with the flow through each competitor shown separately.
//
//   explain_blobs [path/to/blobs.csv]

#include <cstdio>
#include <exception>

#include "neon/neon.hpp"

int main(int argc, char** argv) {
  using namespace neon;
  try {
    const Dataset data = argc > 1 ? ingest_csv(argv[1]) : make_blobs(40, 3, 2, 1.0, 7, 6.0);
    const std::size_t k = 3;
    const LloydResult fit = train_standard(data, k, 0);
    const ClusterModel model = fit.model;
    const Stiffness beta = calibrate_beta(model, data.points, 0.9, 1e-3);
    std::printf("k-means: %d iterations, objective %.4f, beta %.4f\n", fit.iterations, fit.objective.back(), beta.value());
    if (data.labels) std::printf("purity %.4f\n", purity(fit.assignment, *data.labels));

    for (std::size_t i : {std::size_t{0}, data.size() / 2, data.size() - 1}) {
      const auto c = static_cast<std::size_t>(fit.assignment[i]);
      const LayeredNetwork net = build_standard(fit.model, c, beta);
      const RuleSpec rules = default_rules(net);
      const ForwardTrace trace = forward(net, data.point(i));
      const RelevanceState state = propagate(net, trace, rules);

      std::printf("\npoint %zu -> cluster %zu, f_c = %.6f\n", i, c, trace.output());
      std::printf("  heatmap  ");
      for (Eigen::Index d = 0; d < state.input().size(); ++d) std::printf(" %+.6f", state.input()[d]);
      std::printf("\n  sum %.6f + leakage %.6f, gap %.2e\n", state.input().sum(), state.bias_leakage, conservation_gap(state));
      for (std::size_t rival = 0; rival < k; ++rival) {
        if (rival == c) continue;
        const Vector part = isolate_competitor(net, trace, rules, rival);
        std::printf("  vs %zu    ", rival);
        for (Eigen::Index d = 0; d < part.size(); ++d) std::printf(" %+.6f", part[d]);
        std::printf("\n");
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "explain_blobs: %s\n", e.what());
    return 1;
  }
  return 0;
}
