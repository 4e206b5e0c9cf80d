#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "knnseq/checkpoint.hpp"
#include "knnseq/dataset.hpp"
#include "knnseq/knn.hpp"
#include "knnseq/pca.hpp"
#include "knnseq/targets_io.hpp"
#include "testutil.hpp"

using knnseq::Dataset;
using knnseq::DatasetFormat;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = testutil::temp_path(name);
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("csv loading") {
  SUBCASE("labels are remapped to 0..C-1 in sorted original order") {
    const auto path = write_temp("remap.csv", "f0,f1,label\n1,2,9\n3,4,5\n");
    const Dataset ds = knnseq::load_dataset(path, DatasetFormat::csv);
    CHECK(ds.n == 2);
    CHECK(ds.d == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.labels[0] == 1);  // 9 -> 1
    CHECK(ds.labels[1] == 0);  // 5 -> 0
    CHECK(ds.label_map == std::vector<std::int64_t>{5, 9});
  }
  SUBCASE("missing label column") {
    const auto path = write_temp("nolabel.csv", "f0,f1\n1,2\n");
    CHECK_THROWS_WITH_AS(knnseq::load_dataset(path, DatasetFormat::csv),
                         doctest::Contains("label"), std::runtime_error);
  }
  SUBCASE("non-numeric feature names the line") {
    const auto path = write_temp("badnum.csv", "f0,label\n1,0\nx,1\n");
    CHECK_THROWS_WITH_AS(knnseq::load_dataset(path, DatasetFormat::csv),
                         doctest::Contains("line 3"), std::runtime_error);
  }
  SUBCASE("non-integer label names the line") {
    const auto path = write_temp("badlabel.csv", "f0,label\n1,0\n2,1.5\n");
    CHECK_THROWS_WITH_AS(knnseq::load_dataset(path, DatasetFormat::csv),
                         doctest::Contains("line 3"), std::runtime_error);
  }
  SUBCASE("empty file") {
    const auto path = write_temp("empty.csv", "");
    CHECK_THROWS_AS(knnseq::load_dataset(path, DatasetFormat::csv), std::runtime_error);
  }
  SUBCASE("origin column is preserved") {
    const auto path =
        write_temp("origin.csv", "f0,label,origin\n1,0,original\n2,1,smote;src=0;nbr=1\n");
    const Dataset ds = knnseq::load_dataset(path, DatasetFormat::csv);
    REQUIRE(ds.origins.size() == 2);
    CHECK(ds.origins[1] == "smote;src=0;nbr=1");
    CHECK(ds.d == 1);
  }
}

TEST_CASE("libsvm loading densifies 1-based sparse entries") {
  const auto path = write_temp("sparse.svm", "1 3:0.5\n-1 1:2.0 4:1.0\n");
  const Dataset ds = knnseq::load_dataset(path, DatasetFormat::libsvm, 4);
  CHECK(ds.n == 2);
  CHECK(ds.d == 4);
  CHECK(ds.features == std::vector<double>{0, 0, 0.5, 0, 2.0, 0, 0, 1.0});
  CHECK(ds.label_map == std::vector<std::int64_t>{-1, 1});
  CHECK(ds.labels[0] == 1);
  CHECK(ds.labels[1] == 0);

  SUBCASE("zero index is rejected") {
    const auto bad = write_temp("bad.svm", "1 0:0.5\n-1 1:1\n");
    CHECK_THROWS_WITH_AS(knnseq::load_dataset(bad, DatasetFormat::libsvm),
                         doctest::Contains("1-based"), std::runtime_error);
  }
}

TEST_CASE("z-score normalization") {
  Dataset ds;
  ds.n = 2;
  ds.d = 3;
  ds.num_classes = 2;
  ds.label_map = {0, 1};
  ds.labels = {0, 1};
  ds.features = {0, 7, 1.0, 10, 7, -1.0};  // columns: [0,10], [7,7], [1,-1]
  const auto stats = knnseq::normalize_fit(ds);
  CHECK(stats.mean[0] == doctest::Approx(5.0));
  CHECK(stats.stddev[0] == doctest::Approx(5.0));  // population std
  const auto norm = knnseq::normalize_matrix(stats, ds);
  CHECK(norm[0] == doctest::Approx(-1.0));
  CHECK(norm[3] == doctest::Approx(1.0));
  // constant feature maps to zero
  CHECK(norm[1] == doctest::Approx(0.0));
  CHECK(norm[4] == doctest::Approx(0.0));
  // already standardized column is unchanged
  CHECK(norm[2] == doctest::Approx(1.0));
  CHECK(norm[5] == doctest::Approx(-1.0));

  SUBCASE("invert undoes apply") {
    const auto z = stats.apply(ds.row_vec(0));
    const auto back = stats.invert(z);
    CHECK(back[0] == doctest::Approx(0.0));
    CHECK(back[1] == doctest::Approx(7.0));  // constant feature restores the mean
    CHECK(back[2] == doctest::Approx(1.0));
  }
}

TEST_CASE("dataset csv round trip") {
  auto ds = testutil::gaussian_blobs(30, 4, 3, 1.5, 21);
  ds.origins.assign(ds.n, "original");
  ds.origins[5] = "model;src=1;t=2";
  const auto path = testutil::temp_path("roundtrip.csv");
  knnseq::save_dataset_csv(ds, path);
  const Dataset back = knnseq::load_dataset(path, DatasetFormat::csv);
  CHECK(back.n == ds.n);
  CHECK(back.d == ds.d);
  CHECK(back.labels == ds.labels);
  CHECK(back.origins == ds.origins);
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    CHECK(back.features[i] == ds.features[i]);  // exact via shortest round-trip formatting
  }
}

TEST_CASE("targets file round trip is lossless and byte-deterministic") {
  auto ds = testutil::gaussian_blobs(40, 3, 2, 2.0, 33);
  const auto stats = knnseq::normalize_fit(ds);
  const auto index = knnseq::NeighborIndex::build(ds, stats);
  knnseq::TargetsFile tf;
  tf.targets = knnseq::exact_targets(index, 4);
  tf.stats = stats;
  tf.label_map = ds.label_map;

  const auto path_a = testutil::temp_path("targets_a.knnt");
  const auto path_b = testutil::temp_path("targets_b.knnt");
  knnseq::write_targets(tf, path_a);
  const knnseq::TargetsFile back = knnseq::read_targets(path_a);
  CHECK(back.targets.n == tf.targets.n);
  CHECK(back.targets.labels == tf.targets.labels);
  CHECK(back.targets.vectors == tf.targets.vectors);
  CHECK(back.targets.distances == tf.targets.distances);
  CHECK(back.stats.mean == tf.stats.mean);
  CHECK(back.stats.stddev == tf.stats.stddev);
  CHECK(back.label_map == tf.label_map);

  knnseq::write_targets(back, path_b);
  CHECK(testutil::read_file_bytes(path_a) == testutil::read_file_bytes(path_b));

  SUBCASE("bad magic is rejected") {
    const auto bad = write_temp("bad.knnt", "NOTAFILE");
    CHECK_THROWS_WITH_AS(knnseq::read_targets(bad), doctest::Contains("magic"),
                         std::runtime_error);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  knnseq::Checkpoint ckpt;
  ckpt.kind = "v2vsls";
  ckpt.set_config("d", 3);
  ckpt.set_config("classes", 2);
  ckpt.stats.mean = {0.5, -1.25, 3.0};
  ckpt.stats.stddev = {1.0, 2.0, 0.0};
  ckpt.label_map = {-1, 1};
  ckpt.params.emplace_back("w", knnseq::diff::Tensor({2, 2}, {0.1, -0.2, 0.3, 0.4}));
  ckpt.params.emplace_back("b", knnseq::diff::Tensor({2}, {1e-300, 12345.6789}));

  const auto path_a = testutil::temp_path("ckpt_a.bin");
  const auto path_b = testutil::temp_path("ckpt_b.bin");
  knnseq::save_checkpoint(ckpt, path_a);
  const knnseq::Checkpoint back = knnseq::load_checkpoint(path_a);
  CHECK(back.kind == ckpt.kind);
  CHECK(back.config_value("d") == 3.0);
  CHECK(back.label_map == ckpt.label_map);
  CHECK(back.param("w").values() == ckpt.param("w").values());
  CHECK(back.param("b").values() == ckpt.param("b").values());
  knnseq::save_checkpoint(back, path_b);
  CHECK(testutil::read_file_bytes(path_a) == testutil::read_file_bytes(path_b));
}

TEST_CASE("2-d pca projection") {
  SUBCASE("axis-aligned anisotropic data aligns with the axes up to sign") {
    knnseq::RngStream rng = knnseq::RngStream::derive(3, "pca-data");
    const std::size_t n = 400;
    std::vector<double> feats(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
      feats[i * 3 + 0] = 5.0 * rng.next_gaussian();
      feats[i * 3 + 1] = 2.0 * rng.next_gaussian();
      feats[i * 3 + 2] = 0.2 * rng.next_gaussian();
    }
    const auto proj = knnseq::project_2d(feats, n, 3);
    CHECK(std::abs(proj.components[0][0]) > 0.99);
    CHECK(std::abs(proj.components[1][1]) > 0.99);
    CHECK(proj.components[0][0] > 0.0);  // sign normalized
    CHECK(proj.eigenvalues[0] >= proj.eigenvalues[1]);
  }
  SUBCASE("duplicated rows project identically") {
    std::vector<double> feats = {1, 2, 3, 1, 2, 3, -4, 0, 2, 7, 1, 1};
    const auto proj = knnseq::project_2d(feats, 4, 3);
    CHECK(proj.coords[0] == doctest::Approx(proj.coords[2]));
    CHECK(proj.coords[1] == doctest::Approx(proj.coords[3]));
  }
  SUBCASE("projection variance ordering holds") {
    auto ds = testutil::gaussian_blobs(200, 6, 2, 3.0, 8);
    const auto proj = knnseq::project_2d(ds);
    double var1 = 0, var2 = 0, m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < ds.n; ++i) {
      m1 += proj.coords[i * 2];
      m2 += proj.coords[i * 2 + 1];
    }
    m1 /= ds.n;
    m2 /= ds.n;
    for (std::size_t i = 0; i < ds.n; ++i) {
      var1 += (proj.coords[i * 2] - m1) * (proj.coords[i * 2] - m1);
      var2 += (proj.coords[i * 2 + 1] - m2) * (proj.coords[i * 2 + 1] - m2);
    }
    CHECK(var1 >= var2);
  }
  SUBCASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(knnseq::project_2d(std::vector<double>{1.0, 2.0}, 1, 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(knnseq::project_2d(std::vector<double>{1.0, 2.0}, 2, 1),
                    std::invalid_argument);
  }
}
