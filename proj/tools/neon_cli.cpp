// neon: train, neuralize and explain k-means-family models from the shell.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "neon/neon.hpp"

namespace {

using neon::Json;
namespace fs = std::filesystem;

enum class Kind { text, count, real, stiffness, counts, texts };

struct Key {
  const char* name;
  Kind kind;
  const char* help;
};

const std::vector<Key>& all_keys() {
  static const std::vector<Key> keys = {
      {"input", Kind::text, "input CSV"},
      {"output", Kind::text, "output file"},
      {"out_dir", Kind::text, "output directory"},
      {"model", Kind::text, "model JSON"},
      {"network", Kind::text, "network JSON"},
      {"model_type", Kind::text, "standard | kernel | deep"},
      {"k", Kind::count, "number of clusters"},
      {"seed", Kind::count, "random seed"},
      {"iterations", Kind::count, "kernel EM iteration cap"},
      {"gamma", Kind::stiffness, "kernel width"},
      {"gamma_target", Kind::real, "nearest-neighbour mass target for gamma calibration"},
      {"gamma_neighbors", Kind::count, "neighbours used by gamma calibration"},
      {"hidden", Kind::counts, "hidden layer widths of the deep feature map"},
      {"features", Kind::count, "deep feature width"},
      {"feature_scale", Kind::real, "scale of the one-hot deep centroids"},
      {"epochs", Kind::count, "deep training epochs"},
      {"step", Kind::real, "deep training step size"},
      {"target", Kind::count, "explained cluster"},
      {"beta", Kind::stiffness, "assignment stiffness, or inf"},
      {"beta_target", Kind::real, "mean top probability for beta calibration"},
      {"beta_tolerance", Kind::real, "tolerance of beta calibration"},
      {"kernel_form", Kind::text, "naive | improved"},
      {"input_rule", Kind::text, "z | z_plus | zb | hybrid"},
      {"hybrid_gamma", Kind::real, "mixing weight of the hybrid rule"},
      {"points", Kind::counts, "row indices to explain"},
      {"methods", Kind::texts, "neon, sa, gi, sr, ig, random"},
      {"ig_steps", Kind::count, "integrated gradient steps"},
      {"flip_batch", Kind::count, "pairs flipped per step, 0 for one percent"},
      {"random_orders", Kind::count, "orders averaged by the random control"},
      {"n_per", Kind::count, "points per blob"},
      {"dim", Kind::count, "blob dimension"},
      {"spread", Kind::real, "blob standard deviation"},
      {"separation", Kind::real, "distance between blob centers"},
  };
  return keys;
}

const Key& key_info(const std::string& name) {
  for (const Key& k : all_keys()) {
    if (name == k.name) return k;
  }
  throw neon::ConfigError("unknown key '" + name + "'");
}

std::string flag_name(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    const auto t = neon::csv_detail::trim(item);
    if (t.empty()) throw neon::ConfigError("empty entry in list '" + s + "'");
    out.emplace_back(t);
  }
  return out;
}

Json parse_count(const std::string& name, const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (s.empty() || s.front() == '-') throw std::invalid_argument(s);
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw neon::ConfigError("'" + name + "' expects a nonnegative integer, got '" + s + "'");
  }
  if (used != s.size()) throw neon::ConfigError("'" + name + "' expects a nonnegative integer, got '" + s + "'");
  return Json(static_cast<std::uint64_t>(v));
}

Json parse_real(const std::string& name, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw neon::ConfigError("'" + name + "' expects a finite number, got '" + s + "'");
  }
  return Json(v);
}

// Flag text -> typed JSON value.
Json from_flag(const Key& key, const std::string& s) {
  switch (key.kind) {
    case Kind::text: return Json(s);
    case Kind::count: return parse_count(key.name, s);
    case Kind::real: return parse_real(key.name, s);
    case Kind::stiffness: return s == "inf" ? Json("inf") : parse_real(key.name, s);
    case Kind::counts: {
      Json arr = Json::array();
      for (const auto& item : split_list(s)) arr.push_back(parse_count(key.name, item));
      return arr;
    }
    case Kind::texts: {
      Json arr = Json::array();
      for (const auto& item : split_list(s)) arr.push_back(item);
      return arr;
    }
  }
  return {};
}

void check_type(const Key& key, const Json& v) {
  auto fail = [&](const char* want) { throw neon::ConfigError("config key '" + std::string(key.name) + "' must be " + want); };
  switch (key.kind) {
    case Kind::text:
      if (!v.is_string()) fail("a string");
      break;
    case Kind::count:
      if (!v.is_number_unsigned()) fail("a nonnegative integer");
      break;
    case Kind::real:
      if (!v.is_number()) fail("a number");
      break;
    case Kind::stiffness:
      if (!v.is_number() && v != Json("inf")) fail("a number or \"inf\"");
      break;
    case Kind::counts:
      if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number_unsigned(); }))
        fail("a list of nonnegative integers");
      break;
    case Kind::texts:
      if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_string(); }))
        fail("a list of strings");
      break;
  }
}

/// Validated settings of one subcommand run.
class Settings {
 public:
  explicit Settings(Json values) : values_(std::move(values)) {}

  bool has(const char* name) const { return values_.contains(name); }

  std::string text(const char* name, std::optional<std::string> fallback = std::nullopt) const {
    return get<std::string>(name, std::move(fallback));
  }
  std::size_t count(const char* name, std::optional<std::size_t> fallback = std::nullopt) const {
    return get<std::size_t>(name, fallback);
  }
  double real(const char* name, std::optional<double> fallback = std::nullopt) const { return get<double>(name, fallback); }
  neon::Stiffness stiffness(const char* name) const { return neon::stiffness_from(require(name)); }
  std::vector<std::size_t> counts(const char* name, std::vector<std::size_t> fallback) const {
    return has(name) ? values_.at(name).get<std::vector<std::size_t>>() : fallback;
  }
  std::vector<std::string> texts(const char* name, std::vector<std::string> fallback) const {
    return has(name) ? values_.at(name).get<std::vector<std::string>>() : fallback;
  }

 private:
  const Json& require(const char* name) const {
    if (!has(name)) throw neon::ConfigError("missing required setting '" + std::string(name) + "'");
    return values_.at(name);
  }
  template <class T>
  T get(const char* name, std::optional<T> fallback) const {
    if (!has(name)) {
      if (fallback) return *fallback;
      require(name);
    }
    return values_.at(name).get<T>();
  }

  Json values_;
};

// ---------------------------------------------------------------- helpers

void write_json(const fs::path& path, const Json& j) { neon::write_atomic(path, neon::dump_json(j)); }

void report(const Json& j) { std::cout << j.dump() << std::endl; }

neon::ClusterModel load_model(const Settings& s) { return neon::model_from_json(neon::parse_json_file(s.text("model"))); }

neon::LayeredNetwork load_network(const Settings& s) {
  neon::LayeredNetwork net = neon::network_from_json(neon::parse_json_file(s.text("network")));
  net.validate();
  return net;
}

neon::Dataset load_data(const Settings& s) {
  neon::Dataset data = neon::ingest_csv(s.text("input"));
  data.validate();
  return data;
}

void require_dim(const neon::LayeredNetwork& net, const neon::Dataset& data) {
  if (net.input_dim() != data.dim()) {
    throw neon::DomainError("network expects " + std::to_string(net.input_dim()) + " features, data has " +
                            std::to_string(data.dim()));
  }
}

std::vector<std::size_t> selected_points(const Settings& s, const neon::Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto points = s.counts("points", all);
  for (std::size_t i : points) {
    if (i >= data.size()) throw neon::ConfigError("point index " + std::to_string(i) + " out of range");
  }
  return points;
}

neon::RuleSpec rules_for(const Settings& s, const neon::LayeredNetwork& net, const neon::Dataset& data) {
  const std::string name = s.text("input_rule", "z");
  neon::RuleSpec rules = neon::default_rules(net);
  if (!std::holds_alternative<neon::LinearLayer>(net.layers.front())) {
    if (name != "z") throw neon::ConfigError("input_rule '" + name + "' needs a linear first layer");
    return rules;
  }
  if (name == "z") return rules;
  if (name == "z_plus") rules.front() = neon::ZPlusRule{};
  else if (name == "zb") {
    rules.front() = neon::ZBRule{data.points.colwise().minCoeff().transpose(), data.points.colwise().maxCoeff().transpose()};
  } else if (name == "hybrid") rules.front() = neon::HybridRule{s.real("hybrid_gamma", 0.25)};
  else throw neon::ConfigError("unknown input_rule '" + name + "'");
  return rules;
}

Json vector_list(const neon::Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

// ---------------------------------------------------------------- subcommands

void cmd_blobs(const Settings& s) {
  const neon::Dataset data = neon::make_blobs(s.count("n_per", 100), s.count("k", 3), s.count("dim", 2), s.real("spread", 1.0),
                                              s.count("seed", 0), s.real("separation", 4.0));
  neon::write_atomic(s.text("output"), neon::dataset_to_csv(data));
  report({{"points", data.size()}, {"dim", data.dim()}, {"output", s.text("output")}});
}

void cmd_train(const Settings& s) {
  const neon::Dataset data = load_data(s);
  const std::string type = s.text("model_type", "standard");
  const std::size_t k = s.count("k");
  const std::uint64_t seed = s.count("seed", 0);
  Json summary{{"model_type", type}, {"points", data.size()}, {"dim", data.dim()}};
  neon::ClusterModel model;
  if (type == "standard") {
    const auto fit = neon::train_standard(data, k, seed);
    summary["iterations"] = fit.iterations;
    summary["objective"] = fit.objective.back();
    model = fit.model;
  } else if (type == "kernel") {
    neon::Stiffness gamma{1.0};
    if (s.has("gamma")) gamma = s.stiffness("gamma");
    else if (s.has("gamma_target")) {
      const std::size_t neighbors = s.count("gamma_neighbors", std::min<std::size_t>(10, data.size() - 1));
      gamma = neon::calibrate_gamma_knn_mass(data.points, neighbors, s.real("gamma_target"));
    } else {
      throw neon::ConfigError("kernel training needs 'gamma' or 'gamma_target'");
    }
    const auto init = neon::train_standard(data, k, seed).assignment;
    const auto fit = neon::train_kernel_em(data, k, gamma, init, static_cast<int>(s.count("iterations", 100)));
    summary["gamma"] = gamma.value();
    summary["iterations"] = fit.iterations;
    summary["converged"] = fit.converged;
    model = fit.model;
  } else if (type == "deep") {
    neon::Dataset labeled = data;
    if (!labeled.labels) labeled.labels = neon::train_standard(data, k, seed).assignment;
    if (labeled.label_count() > k) throw neon::ConfigError("data has more labels than k");
    std::vector<std::size_t> widths{data.dim()};
    for (std::size_t w : s.counts("hidden", {})) widths.push_back(w);
    widths.push_back(s.count("features", k));
    neon::DeepTrainConfig config{widths, neon::one_hot_centroids(k, widths.back(), s.real("feature_scale", 1.0)),
                                 static_cast<int>(s.count("epochs", 200)), s.real("step", 1e-2), seed, std::nullopt};
    const auto fit = neon::train_deep(labeled, config);
    summary["loss_initial"] = fit.loss.front();
    summary["loss_final"] = fit.loss.back();
    model = fit.model;
  } else {
    throw neon::ConfigError("unknown model_type '" + type + "'");
  }
  write_json(s.text("output"), neon::model_to_json(model));
  summary["output"] = s.text("output");
  report(summary);
}

void cmd_neuralize(const Settings& s) {
  const neon::ClusterModel model = load_model(s);
  neon::Stiffness beta{1.0};
  if (s.has("beta")) beta = s.stiffness("beta");
  else if (s.has("beta_target")) {
    const neon::Dataset data = load_data(s);
    beta = neon::calibrate_beta(model, data.points, s.real("beta_target"), s.real("beta_tolerance", 0.01));
  } else {
    throw neon::ConfigError("neuralize needs 'beta' or 'beta_target'");
  }
  const std::string form = s.text("kernel_form", "improved");
  if (form != "naive" && form != "improved") throw neon::ConfigError("unknown kernel_form '" + form + "'");
  const neon::LayeredNetwork net = neon::build_network(model, s.count("target", 0), beta,
                                                       form == "naive" ? neon::KernelNetwork::naive : neon::KernelNetwork::improved);
  write_json(s.text("output"), neon::network_to_json(net));
  report({{"beta", neon::stiffness_json(beta)}, {"layers", net.layers.size()}, {"model_tag", neon::to_string(net.model_tag)},
          {"output", s.text("output")}});
}

void cmd_explain(const Settings& s) {
  const neon::LayeredNetwork net = load_network(s);
  const neon::Dataset data = load_data(s);
  require_dim(net, data);
  const auto points = selected_points(s, data);
  const neon::RuleSpec rules = rules_for(s, net, data);
  std::vector<neon::RelevanceState> states(points.size());
  neon::parallel_for(points.size(), [&](std::size_t t) { states[t] = neon::explain(net, data.point(points[t]), rules); });

  const fs::path dir = s.text("out_dir");
  const auto [w, h] = neon::heatmap_shape(data.dim());
  Json rows = Json::array();
  double worst = 0.0;
  for (std::size_t t = 0; t < points.size(); ++t) {
    const auto& st = states[t];
    const std::string stem = "heatmap_" + std::to_string(points[t]);
    neon::write_atomic(dir / (stem + ".json"), neon::heatmap_json(st.input()));
    neon::write_atomic(dir / (stem + ".pgm"), neon::heatmap_pgm(st.input(), w, h));
    const double gap = neon::conservation_gap(st);
    worst = std::max(worst, std::abs(gap));
    rows.push_back({{"point", points[t]}, {"f_c", st.relevance.back()[0]}, {"sum_relevance", st.input().sum()},
                    {"leakage", st.bias_leakage}, {"gap", gap}});
  }
  write_json(dir / "conservation.json", {{"rules", s.text("input_rule", "z")}, {"max_abs_gap", worst}, {"points", rows}});
  report({{"points", points.size()}, {"max_abs_gap", worst}, {"out_dir", dir.string()}});
}

const std::set<std::string> kBaselines{"sa", "gi", "sr", "ig"};

void cmd_baseline(const Settings& s) {
  const neon::LayeredNetwork net = load_network(s);
  const neon::Dataset data = load_data(s);
  require_dim(net, data);
  const auto points = selected_points(s, data);
  const auto methods = s.texts("methods", {"sa", "gi", "sr", "ig"});
  for (const auto& m : methods) {
    if (!kBaselines.count(m)) throw neon::ConfigError("unknown baseline '" + m + "'");
  }
  const bool needs_root = std::any_of(methods.begin(), methods.end(), [](const std::string& m) { return m == "sr" || m == "ig"; });
  const std::size_t steps = s.count("ig_steps", 1024);
  neon::RootSearchOptions root_opt;
  root_opt.seed = s.count("seed", 0);

  struct Row {
    std::map<std::string, neon::Vector> heatmaps;
    Json info;
  };
  std::vector<Row> rows(points.size());
  neon::parallel_for(points.size(), [&](std::size_t t) {
    const neon::Vector x = data.point(points[t]);
    Row& row = rows[t];
    const double f = neon::evaluate(net, x);
    row.info = {{"point", points[t]}, {"f_c", f}};
    std::optional<neon::RootPoint> root;
    if (needs_root) {
      if (f <= 0.0) row.info["skipped"] = "f_c <= 0, the point is its own root";
      else {
        try {
          root = neon::find_root(net, x, root_opt);
          row.info["root_distance"] = (x - root->point).norm();
        } catch (const neon::RootNotFound& e) {
          row.info["skipped"] = e.what();
        }
      }
    }
    for (const auto& m : methods) {
      if (m == "sa") row.heatmaps[m] = neon::explain_sa(net, x);
      else if (m == "gi") row.heatmaps[m] = neon::explain_gi(net, x);
      else if (!root) continue;
      else if (m == "sr") row.heatmaps[m] = neon::explain_sr(net, x, *root);
      else {
        auto ig = neon::explain_ig(net, x, *root, steps);
        row.info["ig_completeness_gap"] = ig.completeness_gap;
        row.heatmaps[m] = std::move(ig.heatmap);
      }
    }
  });

  const fs::path dir = s.text("out_dir");
  Json out = Json::array();
  for (std::size_t t = 0; t < points.size(); ++t) {
    for (const auto& [m, hm] : rows[t].heatmaps) {
      neon::write_atomic(dir / (m + "_" + std::to_string(points[t]) + ".json"), neon::heatmap_json(hm));
      rows[t].info[m + "_sum"] = hm.sum();
    }
    out.push_back(rows[t].info);
  }
  write_json(dir / "baseline_report.json", {{"methods", methods}, {"ig_steps", steps}, {"points", out}});
  report({{"points", points.size()}, {"methods", methods}, {"out_dir", dir.string()}});
}

void cmd_flip(const Settings& s) {
  const neon::LayeredNetwork net = load_network(s);
  const neon::Dataset data = load_data(s);
  require_dim(net, data);
  const auto methods = s.texts("methods", {"neon", "random"});
  for (const auto& m : methods) {
    if (m != "neon" && m != "random" && !kBaselines.count(m)) throw neon::ConfigError("unknown flip method '" + m + "'");
  }

  std::vector<std::size_t> candidates;
  if (s.has("points")) candidates = selected_points(s, data);
  else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (neon::evaluate(net, data.point(i)) > 0.0) candidates.push_back(i);
    }
  }
  neon::RootSearchOptions root_opt;
  root_opt.seed = s.count("seed", 0);
  std::vector<std::optional<neon::Vector>> roots(candidates.size());
  neon::parallel_for(candidates.size(), [&](std::size_t t) {
    const neon::Vector x = data.point(candidates[t]);
    if (neon::evaluate(net, x) <= 0.0) return;
    try {
      roots[t] = neon::find_root(net, x, root_opt).point;
    } catch (const neon::RootNotFound&) {
    }
  });
  std::vector<std::size_t> used;
  for (std::size_t t = 0; t < candidates.size(); ++t) {
    if (roots[t]) used.push_back(t);
  }
  if (used.empty()) throw neon::DomainError("flip: no point with f_c > 0 and a root point");

  const auto n = static_cast<Eigen::Index>(used.size());
  neon::Matrix points(n, static_cast<Eigen::Index>(data.dim()));
  neon::Matrix root_rows(n, points.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    points.row(r) = data.points.row(static_cast<Eigen::Index>(candidates[used[static_cast<std::size_t>(r)]]));
    root_rows.row(r) = roots[used[static_cast<std::size_t>(r)]]->transpose();
  }
  const std::size_t batch_flag = s.count("flip_batch", 0);
  const std::size_t batch = batch_flag == 0 ? neon::default_flip_batch(static_cast<std::size_t>(points.size())) : batch_flag;
  const neon::LogitFn logit = [&net](std::size_t, const neon::Vector& x) { return neon::evaluate(net, x); };
  const neon::RuleSpec rules = rules_for(s, net, data);
  const std::size_t steps = s.count("ig_steps", 256);

  std::vector<neon::FlipCurve> curves;
  Json areas = Json::object();
  for (const auto& m : methods) {
    neon::FlipCurve curve;
    if (m == "random") {
      curve = neon::random_flip_curve(logit, points, root_rows, batch, s.count("random_orders", 100), s.count("seed", 0)).mean;
    } else {
      neon::Matrix rel(n, points.cols());
      neon::parallel_for(static_cast<std::size_t>(n), [&](std::size_t t) {
        const auto r = static_cast<Eigen::Index>(t);
        const neon::Vector x = points.row(r).transpose();
        const neon::RootPoint root{root_rows.row(r).transpose(), 0.0, 0};
        neon::Vector h;
        if (m == "neon") h = neon::explain(net, x, rules).input();
        else if (m == "sa") h = neon::explain_sa(net, x);
        else if (m == "gi") h = neon::explain_gi(net, x);
        else if (m == "sr") h = neon::explain_sr(net, x, root);
        else h = neon::explain_ig(net, x, root, steps).heatmap;
        rel.row(r) = h.transpose();
      });
      curve = neon::pixel_flip(logit, points, rel, root_rows, batch, m);
    }
    areas[m] = neon::curve_area(curve);
    curves.push_back(std::move(curve));
  }
  neon::write_atomic(s.text("output"), neon::flip_curves_csv(curves));
  report({{"points", used.size()}, {"skipped", candidates.size() - used.size()}, {"batch", batch}, {"areas", areas},
          {"output", s.text("output")}});
}

void cmd_purity(const Settings& s) {
  const neon::ClusterModel model = load_model(s);
  const neon::Dataset data = load_data(s);
  const auto& labels = data.require_labels("purity");
  if (neon::model_dim(model) != data.dim()) throw neon::DomainError("model and data dimensions differ");
  report({{"purity", neon::purity(neon::assign(model, data.points), labels)}});
}

// ---------------------------------------------------------------- wiring

struct Command {
  const char* name;
  const char* about;
  std::vector<std::string> keys;
  std::function<void(const Settings&)> run;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> list = {
      {"blobs", "write labeled Gaussian blobs as CSV", {"output", "n_per", "k", "dim", "spread", "separation", "seed"}, cmd_blobs},
      {"train",
       "fit a standard, kernel or deep model",
       {"input", "output", "model_type", "k", "seed", "iterations", "gamma", "gamma_target", "gamma_neighbors", "hidden", "features",
        "feature_scale", "epochs", "step"},
       cmd_train},
      {"neuralize",
       "rewrite a model as a network for one target cluster",
       {"model", "output", "input", "target", "beta", "beta_target", "beta_tolerance", "kernel_form"},
       cmd_neuralize},
      {"explain",
       "propagate the logit back to the input",
       {"network", "input", "out_dir", "points", "input_rule", "hybrid_gamma"},
       cmd_explain},
      {"baseline", "gradient-based and root-based heatmaps", {"network", "input", "out_dir", "points", "methods", "ig_steps", "seed"},
       cmd_baseline},
      {"flip",
       "pixel-flipping curves for several explainers",
       {"network", "input", "output", "points", "methods", "flip_batch", "random_orders", "seed", "input_rule", "hybrid_gamma",
        "ig_steps"},
       cmd_flip},
      {"purity", "cluster purity of a model against labels", {"model", "input"}, cmd_purity},
  };
  return list;
}

Settings merge(const Command& cmd, const std::string& config_path, const std::map<std::string, std::string>& flags) {
  const std::set<std::string> allowed(cmd.keys.begin(), cmd.keys.end());
  Json values = Json::object();
  if (!config_path.empty()) {
    const Json file = neon::parse_json_file(config_path);
    if (!file.is_object()) throw neon::ConfigError("config must be a JSON object");
    for (const auto& [name, v] : file.items()) {
      if (!allowed.count(name)) throw neon::ConfigError("unknown config key '" + name + "' for '" + cmd.name + "'");
      check_type(key_info(name), v);
      values[name] = v;
    }
  }
  for (const auto& [name, text] : flags) values[name] = from_flag(key_info(name), text);
  return Settings(std::move(values));
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const neon::ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const neon::ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const neon::CalibrationError*>(&e)) return "CalibrationError";
  if (dynamic_cast<const neon::DomainError*>(&e)) return "DomainError";
  if (dynamic_cast<const neon::ResourceError*>(&e)) return "ResourceError";
  if (dynamic_cast<const neon::RootNotFound*>(&e)) return "RootNotFound";
  if (dynamic_cast<const Json::exception*>(&e)) return "ParseError";
  return "Error";
}

int fail(const std::exception& e) {
  Json line{{"error", error_kind(e)}, {"message", e.what()}};
  if (const auto* pe = dynamic_cast<const neon::ParseError*>(&e)) line["line"] = pe->line();
  std::cerr << line.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neon: neuralized k-means explanations"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> flag_options;
  std::map<std::string, CLI::App*> subs;
  for (const Command& cmd : commands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.about);
    sub->add_option("--config", config_path, "JSON config; flags override it");
    auto& store = flag_values[cmd.name];
    for (const std::string& key : cmd.keys) {
      CLI::Option* opt = sub->add_option(flag_name(key), store[key], key_info(key).help);
      flag_options[cmd.name].emplace_back(key, opt);
    }
    subs[cmd.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    std::cerr << Json{{"error", "UsageError"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }

  for (const Command& cmd : commands()) {
    if (!subs[cmd.name]->parsed()) continue;
    try {
      std::map<std::string, std::string> given;
      for (const auto& [key, opt] : flag_options[cmd.name]) {
        if (opt->count() > 0) given[key] = flag_values[cmd.name][key];
      }
      cmd.run(merge(cmd, config_path, given));
      return 0;
    } catch (const std::exception& e) {
      return fail(e);
    }
  }
  return 2;
}
