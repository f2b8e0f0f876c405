#pragma once

// File formats: model / network JSON, headered CSV datasets, heatmaps as
// JSON arrays and ASCII PGM, flip curves as CSV. All writers go through
// write_atomic (temp file, then rename).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "neon/evaluation.hpp"
#include "neon/neuralize.hpp"
#include "neon/propagate.hpp"

namespace neon {

using Json = nlohmann::json;

inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- JSON

namespace json_detail {

inline void require_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ParseError(0, std::string(what) + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ParseError(0, std::string(what) + ": unknown key '" + key + "'");
  }
  for (const char* key : allowed) {
    if (!j.contains(key)) throw ParseError(0, std::string(what) + ": missing key '" + key + "'");
  }
}

inline Json vector_json(const VectorRef& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from(const Json& j) {
  if (!j.is_array()) throw ParseError(0, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Json matrix_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
  return out;
}

inline Matrix matrix_from(const Json& j) {
  if (!j.is_array() || j.empty()) throw ParseError(0, "expected a nonempty nested array");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ParseError(0, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

inline Json groups_json(const PoolGroups& groups) {
  Json out = Json::array();
  for (const auto& g : groups) out.push_back(g);
  return out;
}

inline PoolGroups groups_from(const Json& j) { return j.get<PoolGroups>(); }

inline const char* activation_name(Activation a) { return a == Activation::identity ? "identity" : "modified_relu"; }

inline Activation activation_from(const Json& j) {
  const auto s = j.get<std::string>();
  if (s == "identity") return Activation::identity;
  if (s == "modified_relu") return Activation::modified_relu;
  throw ParseError(0, "unknown activation '" + s + "'");
}

}  // namespace json_detail

/// Finite stiffness as a number, the hard limit as the string "inf".
inline Json stiffness_json(Stiffness s) { return s.is_infinite() ? Json("inf") : Json(s.value()); }

inline Stiffness stiffness_from(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return Stiffness::infinite();
    throw ParseError(0, "stiffness must be a positive number or \"inf\"");
  }
  return Stiffness(j.get<double>());
}

inline Json model_to_json(const ClusterModel& model) {
  using namespace json_detail;
  return std::visit(
      [](const auto& m) -> Json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, StandardModel>) {
          return Json{{"model_type", "standard"}, {"centroids", matrix_json(m.centroids)}};
        } else if constexpr (std::is_same_v<T, KernelModel>) {
          return Json{{"model_type", "kernel"},
                      {"support", matrix_json(m.support)},
                      {"membership", m.membership},
                      {"gamma", stiffness_json(m.gamma)},
                      {"normalizers", vector_json(m.normalizers)}};
        } else {
          Json layers = Json::array();
          for (const DeepLayer& l : m.feature_map) {
            layers.push_back(Json{{"weights", matrix_json(l.weights)},
                                  {"bias", vector_json(l.bias)},
                                  {"activation", activation_name(l.activation)}});
          }
          return Json{{"model_type", "deep"}, {"feature_map", layers}, {"centroids", matrix_json(m.centroids)}};
        }
      },
      model);
}

inline ClusterModel model_from_json(const Json& j) {
  using namespace json_detail;
  if (!j.is_object() || !j.contains("model_type")) throw ParseError(0, "model: missing model_type");
  const auto type = j.at("model_type").get<std::string>();
  if (type == "standard") {
    require_keys(j, {"model_type", "centroids"}, "standard model");
    return StandardModel{matrix_from(j.at("centroids"))};
  }
  if (type == "kernel") {
    require_keys(j, {"model_type", "support", "membership", "gamma", "normalizers"}, "kernel model");
    KernelModel rebuilt = make_kernel_model(matrix_from(j.at("support")), j.at("membership").get<Assignment>(),
                                            stiffness_from(j.at("gamma")));
    const Vector stored = vector_from(j.at("normalizers"));
    if (stored.size() != rebuilt.normalizers.size() ||
        ((stored - rebuilt.normalizers).array().abs() > 1e-9 * rebuilt.normalizers.array()).any()) {
      throw ParseError(0, "kernel model: normalizers disagree with support and gamma");
    }
    rebuilt.normalizers = stored;
    return rebuilt;
  }
  if (type == "deep") {
    require_keys(j, {"model_type", "feature_map", "centroids"}, "deep model");
    DeepModel m;
    for (const Json& l : j.at("feature_map")) {
      require_keys(l, {"weights", "bias", "activation"}, "deep layer");
      m.feature_map.push_back({matrix_from(l.at("weights")), vector_from(l.at("bias")), activation_from(l.at("activation"))});
    }
    m.centroids = matrix_from(j.at("centroids"));
    m.validate();
    return m;
  }
  throw ParseError(0, "unknown model_type '" + type + "'");
}

inline Json network_to_json(const LayeredNetwork& net) {
  using namespace json_detail;
  Json layers = Json::array();
  for (const Layer& layer : net.layers) {
    layers.push_back(std::visit(
        [](const auto& l) -> Json {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, LinearLayer>) {
            return Json{{"kind", "linear"}, {"weights", matrix_json(l.weights)}, {"bias", vector_json(l.bias)}};
          } else if constexpr (std::is_same_v<T, SquaredDistanceLayer>) {
            return Json{{"kind", "squared_distance"}, {"centers", matrix_json(l.centers)}, {"bias", vector_json(l.bias)}};
          } else if constexpr (std::is_same_v<T, SoftMinPoolLayer>) {
            return Json{{"kind", "soft_min_pool"},
                        {"beta", stiffness_json(l.beta)},
                        {"groups", groups_json(l.groups)},
                        {"input_width", l.input_width},
                        {"scale_by_beta", l.scale_by_beta}};
          } else if constexpr (std::is_same_v<T, SoftMaxPoolLayer>) {
            return Json{{"kind", "soft_max_pool"},
                        {"beta", stiffness_json(l.beta)},
                        {"groups", groups_json(l.groups)},
                        {"input_width", l.input_width}};
          } else {
            return Json{{"kind", "elementwise"}, {"activation", activation_name(l.activation)}, {"width", l.width}};
          }
        },
        layer));
  }
  return Json{{"model_tag", to_string(net.model_tag)}, {"target_cluster", net.target_cluster}, {"layers", layers}};
}

inline LayeredNetwork network_from_json(const Json& j) {
  using namespace json_detail;
  require_keys(j, {"model_tag", "target_cluster", "layers"}, "network");
  LayeredNetwork net;
  const auto tag = j.at("model_tag").get<std::string>();
  if (tag == "standard") net.model_tag = ModelTag::standard;
  else if (tag == "kernel_naive") net.model_tag = ModelTag::kernel_naive;
  else if (tag == "kernel_improved") net.model_tag = ModelTag::kernel_improved;
  else if (tag == "deep") net.model_tag = ModelTag::deep;
  else throw ParseError(0, "unknown model_tag '" + tag + "'");
  net.target_cluster = j.at("target_cluster").get<std::size_t>();
  for (const Json& l : j.at("layers")) {
    const auto kind = l.at("kind").get<std::string>();
    if (kind == "linear") {
      require_keys(l, {"kind", "weights", "bias"}, "linear layer");
      net.layers.emplace_back(LinearLayer{matrix_from(l.at("weights")), vector_from(l.at("bias"))});
    } else if (kind == "squared_distance") {
      require_keys(l, {"kind", "centers", "bias"}, "squared_distance layer");
      net.layers.emplace_back(SquaredDistanceLayer{matrix_from(l.at("centers")), vector_from(l.at("bias"))});
    } else if (kind == "soft_min_pool") {
      require_keys(l, {"kind", "beta", "groups", "input_width", "scale_by_beta"}, "soft_min_pool layer");
      net.layers.emplace_back(SoftMinPoolLayer{stiffness_from(l.at("beta")), groups_from(l.at("groups")),
                                               l.at("input_width").get<std::size_t>(), l.at("scale_by_beta").get<bool>()});
    } else if (kind == "soft_max_pool") {
      require_keys(l, {"kind", "beta", "groups", "input_width"}, "soft_max_pool layer");
      net.layers.emplace_back(
          SoftMaxPoolLayer{stiffness_from(l.at("beta")), groups_from(l.at("groups")), l.at("input_width").get<std::size_t>()});
    } else if (kind == "elementwise") {
      require_keys(l, {"kind", "activation", "width"}, "elementwise layer");
      net.layers.emplace_back(ElementwiseLayer{activation_from(l.at("activation")), l.at("width").get<std::size_t>()});
    } else {
      throw ParseError(0, "unknown layer kind '" + kind + "'");
    }
  }
  net.validate();
  return net;
}

/// Pretty-printed JSON text; doubles use the shortest round-trip form.
inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Json parse_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- CSV

namespace csv_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace csv_detail

/// Parses a headered CSV. A column named `label` becomes the labels; every
/// other cell must be a finite decimal.
inline Dataset parse_csv(std::string_view text) {
  using namespace csv_detail;
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(1, "empty file");

  const auto header = split(lines[0]);
  std::ptrdiff_t label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") label_col = static_cast<std::ptrdiff_t>(c);
  }
  const std::size_t dim = header.size() - (label_col >= 0 ? 1 : 0);
  if (dim == 0) throw ParseError(1, "no feature columns");
  if (lines.size() < 2) throw ParseError(2, "no data rows");

  Dataset data{Matrix(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(dim)), std::nullopt};
  if (label_col >= 0) data.labels.emplace();
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split(lines[r]);
    if (cells.size() != header.size()) {
      throw ParseError(r + 1, "expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    std::size_t col = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string_view cell = cells[c];
      if (static_cast<std::ptrdiff_t>(c) == label_col) {
        int y = 0;
        const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
        if (ec != std::errc() || p != cell.data() + cell.size() || y < 0) {
          throw ParseError(r + 1, "invalid label '" + std::string(cell) + "'");
        }
        data.labels->push_back(y);
        continue;
      }
      double v = 0.0;
      const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(r + 1, "column '" + std::string(header[c]) + "': '" + std::string(cell) + "' is not a finite number");
      }
      data.points(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(col++)) = v;
    }
  }
  return data;
}

inline Dataset ingest_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

inline std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t d = 0; d < data.dim(); ++d) out << (d ? "," : "") << "x" << d;
  if (data.labels) out << ",label";
  out << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t d = 0; d < data.dim(); ++d) {
      out << (d ? "," : "") << data.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
    }
    if (data.labels) out << "," << (*data.labels)[i];
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------- heatmaps

inline std::string heatmap_json(const VectorRef& heatmap) { return json_detail::vector_json(heatmap).dump() + "\n"; }

/// ASCII P2 image, maxval 255: 128 at zero, 255 at +max|R|, 1 at -max|R|.
inline std::string heatmap_pgm(const VectorRef& heatmap, std::size_t width, std::size_t height) {
  if (width * height != static_cast<std::size_t>(heatmap.size())) throw DomainError("heatmap_pgm: width x height != length");
  const double scale = heatmap.size() ? heatmap.cwiseAbs().maxCoeff() : 0.0;
  std::ostringstream out;
  out << "P2\n" << width << " " << height << "\n255\n";
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double v = heatmap[static_cast<Eigen::Index>(r * width + c)];
      const long level = scale > 0.0 ? std::lround(128.0 + 127.0 * std::clamp(v / scale, -1.0, 1.0)) : 128;
      out << (c ? " " : "") << level;
    }
    out << "\n";
  }
  return out.str();
}

/// Picks a square layout when the length is a perfect square, else one row.
inline std::pair<std::size_t, std::size_t> heatmap_shape(std::size_t length) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(length))));
  if (side * side == length) return {side, side};
  return {length, 1};
}

inline std::string flip_curves_csv(const std::vector<FlipCurve>& curves) {
  std::ostringstream out;
  out << std::setprecision(17) << "fraction,mean_logit,method\n";
  for (const FlipCurve& c : curves) {
    for (std::size_t t = 0; t < c.fractions.size(); ++t) out << c.fractions[t] << "," << c.mean_logit[t] << "," << c.method << "\n";
  }
  return out.str();
}

}  // namespace neon
