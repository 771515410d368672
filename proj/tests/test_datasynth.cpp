#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "rgcl/datasynth.hpp"
#include "test_support.hpp"

using namespace rgcl;
using namespace rgcl::synth;

TEST_CASE("long-tail cluster sizes") {
  // largest-remainder rounding of 2000 * 100^(-j/9) / sum, checked by hand
  CHECK(longtail_cluster_sizes(10, 2000, 100.0) ==
        std::vector<std::size_t>{806, 483, 290, 174, 104, 62, 37, 22, 14, 8});
  CHECK(longtail_cluster_sizes(10, 2000, 1.0) == std::vector<std::size_t>(10, 200));
  CHECK(longtail_cluster_sizes(4, 64, 4.0) == std::vector<std::size_t>{28, 18, 11, 7});
  CHECK_THROWS_AS(longtail_cluster_sizes(1, 10, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(longtail_cluster_sizes(5, 4, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(longtail_cluster_sizes(3, 10, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(longtail_cluster_sizes(10, 20, 1000.0), std::invalid_argument);
}

TEST_CASE("long-tail sizes sum to n and are non-increasing") {
  RandomStream rs(71);
  int checked = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 2 + rs.uniform_below(15);
    const std::size_t n = k + rs.uniform_below(3000);
    const double ratio = 1.0 + 200.0 * rs.uniform();
    std::vector<std::size_t> sizes;
    try {
      sizes = longtail_cluster_sizes(k, n, ratio);
    } catch (const std::invalid_argument&) {
      continue;
    }
    ++checked;
    CHECK(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) == n);
    for (std::size_t j = 1; j < k; ++j) CHECK(sizes[j] <= sizes[j - 1]);
    // largest remainder never strays more than one from the exact share
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::pow(ratio, -static_cast<double>(j) / static_cast<double>(k - 1));
    for (std::size_t j = 0; j < k; ++j) {
      const double exact = static_cast<double>(n) * std::pow(ratio, -static_cast<double>(j) / static_cast<double>(k - 1)) / total;
      CHECK(std::abs(static_cast<double>(sizes[j]) - exact) < 1.0);
    }
  }
  CHECK(checked > 300);
}

TEST_CASE("long-tail clusters are seeded and grouped by label") {
  LongTailParams p;
  p.samples = 300;
  p.clusters = 5;
  p.imbalance_ratio = 10.0;
  p.input_dim = 6;
  p.seed = 3;
  const SynthDataset a = gen_longtail_clusters(p);
  const SynthDataset b = gen_longtail_clusters(p);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 300);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a.labels[i] >= a.labels[i - 1]);
  for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(squared_norm(a.centers.row(j)) - 1.0) <= 1e-12);

  // members sit within a few noise widths of their center
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < 6; ++c) d2 += std::pow(a.inputs(i, c) - a.centers(a.labels[i], c), 2);
    CHECK(std::sqrt(d2) < 6.0 * p.noise * std::sqrt(6.0));
  }

  p.seed = 4;
  CHECK(gen_longtail_clusters(p).inputs != a.inputs);
  p.noise = -1.0;
  CHECK_THROWS_AS(gen_longtail_clusters(p), std::invalid_argument);
}

TEST_CASE("augment adds scaled gaussian noise") {
  const Vector x{1.0, 2.0, 3.0};
  RandomStream s(5);
  CHECK(augment(x, 0.0, s) == x);
  CHECK(s.position() == 0);
  RandomStream a(6), b(6);
  const Vector ya = augment(x, 0.5, a);
  RandomStream g(6);
  for (std::size_t c = 0; c < 3; ++c) CHECK(ya[c] == doctest::Approx(x[c] + 0.5 * g.gaussian()).epsilon(1e-15));
  CHECK(augment(x, 0.5, b) == ya);
  CHECK_THROWS_AS(augment(x, -0.1, s), std::invalid_argument);
}

TEST_CASE("bimodal pairs share the latent clusters") {
  BimodalParams p;
  p.samples = 200;
  p.clusters = 4;
  p.imbalance_ratio = 5.0;
  p.seed = 9;
  const BimodalSynthDataset d = gen_bimodal_pairs(p);
  CHECK(d.size() == 200);
  CHECK(d.pairs.images.cols() == p.image_dim);
  CHECK(d.pairs.texts.cols() == p.text_dim);
  CHECK(d.cluster_sizes == longtail_cluster_sizes(4, 200, 5.0));
  CHECK(d.pairs.images != d.pairs.texts);

  // zero noise: images are exactly the linear map of the latent
  p.noise = 0.0;
  const BimodalSynthDataset clean = gen_bimodal_pairs(p);
  for (std::size_t r = 0; r < p.image_dim; ++r)
    CHECK(clean.pairs.images(7, r) == doctest::Approx(dot(clean.image_map.row(r), clean.latent.row(7))).epsilon(1e-14));

  p.mirrored = true;
  p.noise = 0.1;
  const BimodalSynthDataset m = gen_bimodal_pairs(p);
  CHECK(m.pairs.images == m.pairs.texts);
  p.text_dim = 12;
  CHECK_THROWS_AS(gen_bimodal_pairs(p), std::invalid_argument);
  p.mirrored = false;
  p.latent_dim = 1;
  CHECK_THROWS_AS(gen_bimodal_pairs(p), std::invalid_argument);
}

TEST_CASE("dataset csv round trip is exact") {
  LongTailParams p;
  p.samples = 40;
  p.clusters = 3;
  p.imbalance_ratio = 2.0;
  p.input_dim = 5;
  const SynthDataset d = gen_longtail_clusters(p);
  const auto dir = std::filesystem::temp_directory_path() / "rgcl_test_synth";
  std::filesystem::create_directories(dir);
  write_dataset_csv(d.inputs, d.labels, dir / "d.csv");
  const LoadedDataset back = read_dataset_csv(dir / "d.csv");
  CHECK(back.inputs == d.inputs);
  CHECK(back.labels == d.labels);
  CHECK_THROWS_AS(write_dataset_csv(d.inputs, std::vector<std::size_t>{1}, dir / "x.csv"), std::invalid_argument);
  CHECK_THROWS(read_dataset_csv(dir / "missing.csv"));
  std::filesystem::remove_all(dir);
}
