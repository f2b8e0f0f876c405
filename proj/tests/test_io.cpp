#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "neon/blobs.hpp"
#include "neon/io.hpp"
#include "neon/parallel.hpp"
#include "test_util.hpp"

namespace neon {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("neon_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<ClusterModel> sample_models() {
  std::mt19937_64 rng(401);
  return {testing::random_standard(rng, 3, 2), testing::random_kernel(rng, 3, 2, 3, 0.37),
          testing::random_deep(rng, {2, 5, 3}, 3)};
}

TEST(ModelJson, RoundTripIsByteIdentical) {
  for (const ClusterModel& model : sample_models()) {
    const std::string first = dump_json(model_to_json(model));
    const ClusterModel back = model_from_json(Json::parse(first));
    EXPECT_EQ(dump_json(model_to_json(back)), first);
    EXPECT_EQ(back.index(), model.index());
    std::mt19937_64 rng(1);
    const Vector x = testing::random_vector(rng, 2);
    EXPECT_EQ(outlierness(back, x), outlierness(model, x));
  }
}

TEST(ModelJson, Rejects) {
  Json j = model_to_json(ClusterModel{StandardModel{Matrix::Identity(2, 2)}});
  j["extra"] = 1;
  EXPECT_THROW(model_from_json(j), ParseError);
  EXPECT_THROW(model_from_json(Json{{"model_type", "spectral"}}), ParseError);
  EXPECT_THROW(model_from_json(Json{{"centroids", Json::array()}}), ParseError);

  Json k = model_to_json(sample_models()[1]);
  k["normalizers"][0] = k["normalizers"][0].get<double>() * 1.01;
  EXPECT_THROW(model_from_json(k), ParseError);

  Json d = model_to_json(sample_models()[2]);
  d["feature_map"][0]["activation"] = "tanh";
  EXPECT_THROW(model_from_json(d), ParseError);
}

TEST(ModelJson, HardStiffness) {
  EXPECT_EQ(stiffness_json(Stiffness::infinite()), Json("inf"));
  EXPECT_TRUE(stiffness_from(Json("inf")).is_infinite());
  EXPECT_EQ(stiffness_from(Json(2.5)).value(), 2.5);
  EXPECT_THROW(stiffness_from(Json("big")), ParseError);
  EXPECT_THROW(stiffness_from(Json(-1.0)), DomainError);
}

TEST(NetworkJson, RoundTripIsByteIdentical) {
  const auto models = sample_models();
  std::vector<LayeredNetwork> nets{build_standard(std::get<StandardModel>(models[0]), 1, Stiffness(1.5)),
                                   build_kernel_naive(std::get<KernelModel>(models[1]), 0, Stiffness(2.0)),
                                   build_kernel_improved(std::get<KernelModel>(models[1]), 2, Stiffness::infinite()),
                                   build_deep(std::get<DeepModel>(models[2]), 1, Stiffness(0.3))};
  std::mt19937_64 rng(2);
  for (const LayeredNetwork& net : nets) {
    const std::string first = dump_json(network_to_json(net));
    const LayeredNetwork back = network_from_json(Json::parse(first));
    EXPECT_EQ(dump_json(network_to_json(back)), first) << to_string(net.model_tag);
    EXPECT_EQ(back.model_tag, net.model_tag);
    EXPECT_EQ(back.target_cluster, net.target_cluster);
    const Vector x = testing::random_vector(rng, 2);
    EXPECT_EQ(evaluate(back, x), evaluate(net, x));
  }
}

TEST(NetworkJson, Rejects) {
  Json j = network_to_json(build_standard(StandardModel{Matrix::Identity(2, 2)}, 0, Stiffness(1.0)));
  Json bad = j;
  bad["layers"][0]["kind"] = "conv";
  EXPECT_THROW(network_from_json(bad), ParseError);
  bad = j;
  bad["layers"][1]["groups"] = Json::array({Json::array({0, 0})});
  EXPECT_THROW(network_from_json(bad), ConfigError);
  bad = j;
  bad["layers"][0]["note"] = "x";
  EXPECT_THROW(network_from_json(bad), ParseError);
}

TEST(Csv, Examples) {
  const Dataset plain = parse_csv("a,b\n1,2\n3.5,-4e-1\n");
  EXPECT_EQ(plain.points, (Matrix(2, 2) << 1.0, 2.0, 3.5, -0.4).finished());
  EXPECT_FALSE(plain.labels);

  const Dataset labeled = parse_csv("x,label,y\r\n0.5, 1 ,2\r\n-1,0,3\r\n\r\n");
  EXPECT_EQ(labeled.points, (Matrix(2, 2) << 0.5, 2.0, -1.0, 3.0).finished());
  EXPECT_EQ(*labeled.labels, (Assignment{1, 0}));
}

void expect_parse_error(const std::string& text, std::size_t line) {
  try {
    parse_csv(text);
    FAIL() << "expected ParseError for line " << line;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), line);
    EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line)), std::string::npos) << e.what();
  }
}

TEST(Csv, ErrorsNameTheLine) {
  expect_parse_error("a,b\n1,2\n3,4\n5,6\n7,8\n9,10\n1,oops\n", 7);
  expect_parse_error("a,b\n1,2\n3\n", 3);
  expect_parse_error("a,b\n1,2,3\n", 2);
  expect_parse_error("", 1);
  expect_parse_error("a,b\n", 2);
  expect_parse_error("a,b\n1,nan\n", 2);
  expect_parse_error("a,b\n1,\n", 2);
  expect_parse_error("a,label\n1,-1\n", 2);
  expect_parse_error("label\n1\n", 1);
}

TEST(Csv, DatasetRoundTrip) {
  const Dataset data = make_blobs(5, 3, 3, 1.0, 4);
  const Dataset back = parse_csv(dataset_to_csv(data));
  EXPECT_EQ(back.points, data.points);
  EXPECT_EQ(back.labels, data.labels);

  const fs::path dir = scratch_dir("csv");
  write_atomic(dir / "blobs.csv", dataset_to_csv(data));
  EXPECT_EQ(ingest_csv(dir / "blobs.csv").points, data.points);
  EXPECT_FALSE(fs::exists(dir / "blobs.csv.tmp"));
  EXPECT_THROW(ingest_csv(dir / "missing.csv"), ParseError);
}

TEST(Heatmap, PgmAndJson) {
  Vector h(4);
  h << 2.0, -1.0, 0.0, -2.0;
  EXPECT_EQ(heatmap_pgm(h, 2, 2), "P2\n2 2\n255\n255 65\n128 1\n");
  EXPECT_EQ(heatmap_pgm(Vector::Zero(3), 3, 1), "P2\n3 1\n255\n128 128 128\n");
  EXPECT_THROW(heatmap_pgm(h, 3, 1), DomainError);
  EXPECT_EQ(Json::parse(heatmap_json(h)), Json::array({2.0, -1.0, 0.0, -2.0}));
  EXPECT_EQ(heatmap_shape(16), (std::pair<std::size_t, std::size_t>{4, 4}));
  EXPECT_EQ(heatmap_shape(6), (std::pair<std::size_t, std::size_t>{6, 1}));
}

TEST(FlipCsv, Layout) {
  const std::string csv = flip_curves_csv({FlipCurve{{0.0, 1.0}, {2.0, 0.5}, "neon"}, FlipCurve{{0.0, 1.0}, {2.0, 1.0}, "random"}});
  EXPECT_EQ(csv, "fraction,mean_logit,method\n0,2,neon\n1,0.5,neon\n0,2,random\n1,1,random\n");
}

TEST(MakeBlobs, Properties) {
  const Dataset exact = make_blobs(4, 3, 2, 0.0, 1);
  const Matrix centers = blob_centers(3, 2, 4.0);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_EQ(exact.points.row(i), centers.row(i / 4));
  EXPECT_EQ(*exact.labels, (Assignment{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}));
  for (Eigen::Index a = 0; a < 3; ++a) EXPECT_NEAR((centers.row(a) - centers.row((a + 1) % 3)).norm(), 4.0, 1e-12);

  EXPECT_EQ(make_blobs(10, 2, 3, 1.0, 9).points, make_blobs(10, 2, 3, 1.0, 9).points);
  EXPECT_NE(make_blobs(10, 2, 3, 1.0, 9).points, make_blobs(10, 2, 3, 1.0, 10).points);

  const std::size_t n = 400;
  const double sigma = 1.5;
  const Dataset big = make_blobs(n, 2, 2, sigma, 5, 8.0);
  const Matrix c = blob_centers(2, 2, 8.0);
  for (Eigen::Index k = 0; k < 2; ++k) {
    const Eigen::RowVectorXd mean = big.points.middleRows(k * static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)).colwise().mean();
    for (Eigen::Index d = 0; d < 2; ++d) EXPECT_LT(std::abs(mean[d] - c(k, d)), 3.0 * sigma / std::sqrt(static_cast<double>(n)));
  }
  EXPECT_THROW(make_blobs(0, 2, 2, 1.0, 0), DomainError);
  EXPECT_THROW(make_blobs(2, 2, 2, -1.0, 0), DomainError);
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  setenv("NEON_THREADS", "3", 1);
  EXPECT_EQ(thread_count(), 3u);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw DomainError("boom");
               }),
               DomainError);
  setenv("NEON_THREADS", "junk", 1);
  EXPECT_GE(thread_count(), 1u);
  unsetenv("NEON_THREADS");
}

}  // namespace
}  // namespace neon
