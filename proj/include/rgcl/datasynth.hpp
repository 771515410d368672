#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rgcl/loss.hpp"
#include "rgcl/numerics.hpp"

namespace rgcl::synth {

struct LongTailParams {
  std::size_t clusters = 10;
  std::size_t samples = 2000;
  double imbalance_ratio = 100.0;
  std::size_t input_dim = 16;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// Samples grouped by cluster; cluster 0 is the largest.
struct SynthDataset {
  Matrix inputs;                            // n x d_in, not normalized
  std::vector<std::size_t> labels;          // cluster id per row
  std::vector<std::size_t> cluster_sizes;   // indexed by cluster id
  Matrix centers;                           // k x d_in, unit rows
  LongTailParams params;

  std::size_t size() const noexcept { return inputs.rows(); }
};

/// Sizes proportional to ratio^(-j/(k-1)), rounded by largest remainder so they
/// sum to n. Throws std::invalid_argument if any cluster would be empty.
std::vector<std::size_t> longtail_cluster_sizes(std::size_t k, std::size_t n, double ratio);

SynthDataset gen_longtail_clusters(const LongTailParams& params);

/// x + strength * N(0, I) drawn from stream.
Vector augment(std::span<const double> x, double strength, RandomStream& stream);

struct BimodalParams {
  std::size_t clusters = 10;
  std::size_t samples = 2000;
  double imbalance_ratio = 100.0;
  std::size_t latent_dim = 8;
  std::size_t image_dim = 16;
  std::size_t text_dim = 16;
  double noise = 0.1;
  std::uint64_t seed = 0;
  /// Text view reuses the image map and image noise (requires image_dim == text_dim).
  bool mirrored = false;
};

struct BimodalSynthDataset {
  PairData pairs;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> cluster_sizes;
  Matrix latent;      // n x d_latent
  Matrix image_map;   // d_img x d_latent
  Matrix text_map;    // d_txt x d_latent
  BimodalParams params;

  std::size_t size() const noexcept { return pairs.size(); }
};

/// image_i = M_img z_i + noise * g, text_i = M_txt z_i + noise * g', z from a long-tail cluster draw.
BimodalSynthDataset gen_bimodal_pairs(const BimodalParams& params);

/// CSV with header `id,label,f0,...,f{d-1}`; values printed with 17 significant digits.
void write_dataset_csv(const Matrix& inputs, std::span<const std::size_t> labels,
                       const std::filesystem::path& path);

struct LoadedDataset {
  Matrix inputs;
  std::vector<std::size_t> labels;
};
LoadedDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace rgcl::synth
