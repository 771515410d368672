#include "rgcl/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rgcl::synth {

std::vector<std::size_t> longtail_cluster_sizes(std::size_t k, std::size_t n, double ratio) {
  if (k < 2) throw std::invalid_argument("longtail: need at least 2 clusters");
  if (n < k) throw std::invalid_argument("longtail: need at least one sample per cluster");
  if (!(ratio >= 1.0)) throw std::invalid_argument("longtail: imbalance ratio must be >= 1");

  Vector weight(k);
  for (std::size_t j = 0; j < k; ++j)
    weight[j] = std::pow(ratio, -static_cast<double>(j) / static_cast<double>(k - 1));
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);

  std::vector<std::size_t> sizes(k);
  Vector remainder(k);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double exact = static_cast<double>(n) * weight[j] / total;
    sizes[j] = static_cast<std::size_t>(std::floor(exact));
    remainder[j] = exact - static_cast<double>(sizes[j]);
    assigned += sizes[j];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // largest remainder first, lower cluster id on ties
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++sizes[order[r % k]];

  for (std::size_t j = 0; j < k; ++j)
    if (sizes[j] == 0)
      throw std::invalid_argument("longtail: infeasible sizes, cluster " + std::to_string(j) +
                                  " would be empty");
  return sizes;
}

namespace {

Matrix unit_centers(std::size_t k, std::size_t dim, RandomStream rs) {
  Matrix centers(k, dim);
  for (std::size_t j = 0; j < k; ++j) {
    auto row = centers.row(j);
    double norm = 0.0;
    do {
      for (double& v : row) v = rs.gaussian();
      norm = std::sqrt(squared_norm(row));
    } while (norm < 1e-9);
    for (double& v : row) v /= norm;
  }
  return centers;
}

}  // namespace

SynthDataset gen_longtail_clusters(const LongTailParams& params) {
  if (params.input_dim == 0) throw std::invalid_argument("longtail: input_dim must be positive");
  if (!(params.noise >= 0.0)) throw std::invalid_argument("longtail: noise must be >= 0");
  SynthDataset ds;
  ds.params = params;
  ds.cluster_sizes = longtail_cluster_sizes(params.clusters, params.samples, params.imbalance_ratio);

  const RandomStream root(params.seed);
  ds.centers = unit_centers(params.clusters, params.input_dim, root.split("centers"));
  ds.inputs = Matrix(params.samples, params.input_dim);
  ds.labels.resize(params.samples);

  std::size_t row = 0;
  for (std::size_t j = 0; j < params.clusters; ++j) {
    RandomStream rs = root.split("cluster", j);
    const auto center = ds.centers.row(j);
    for (std::size_t c = 0; c < ds.cluster_sizes[j]; ++c, ++row) {
      auto x = ds.inputs.row(row);
      for (std::size_t d = 0; d < x.size(); ++d) x[d] = center[d] + params.noise * rs.gaussian();
      ds.labels[row] = j;
    }
  }
  return ds;
}

Vector augment(std::span<const double> x, double strength, RandomStream& stream) {
  if (!(strength >= 0.0)) throw std::invalid_argument("augment: strength must be >= 0");
  Vector out(x.begin(), x.end());
  if (strength == 0.0) return out;
  for (double& v : out) v += strength * stream.gaussian();
  return out;
}

BimodalSynthDataset gen_bimodal_pairs(const BimodalParams& params) {
  if (params.latent_dim < 2 || params.image_dim < 2 || params.text_dim < 2)
    throw std::invalid_argument("bimodal: all dimensions must be >= 2");
  if (params.mirrored && params.image_dim != params.text_dim)
    throw std::invalid_argument("bimodal: mirrored views need image_dim == text_dim");

  BimodalSynthDataset ds;
  ds.params = params;
  const SynthDataset latent = gen_longtail_clusters({params.clusters, params.samples,
                                                     params.imbalance_ratio, params.latent_dim,
                                                     params.noise, params.seed});
  ds.latent = latent.inputs;
  ds.labels = latent.labels;
  ds.cluster_sizes = latent.cluster_sizes;

  const RandomStream root(params.seed);
  auto random_map = [](std::size_t rows, std::size_t cols, RandomStream rs) {
    Matrix m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : m.values()) v = scale * rs.gaussian();
    return m;
  };
  ds.image_map = random_map(params.image_dim, params.latent_dim, root.split("image_map"));
  ds.text_map = params.mirrored ? ds.image_map
                                : random_map(params.text_dim, params.latent_dim, root.split("text_map"));

  const std::size_t n = params.samples;
  ds.pairs.images = Matrix(n, params.image_dim);
  ds.pairs.texts = Matrix(n, params.text_dim);
  RandomStream img_noise = root.split("image_noise");
  RandomStream txt_noise = params.mirrored ? root.split("image_noise") : root.split("text_noise");
  auto project = [&](const Matrix& map, std::span<const double> z, std::span<double> out,
                     RandomStream& noise) {
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(map.row(r), z) + params.noise * noise.gaussian();
  };
  for (std::size_t i = 0; i < n; ++i) {
    project(ds.image_map, ds.latent.row(i), ds.pairs.images.row(i), img_noise);
    project(ds.text_map, ds.latent.row(i), ds.pairs.texts.row(i), txt_noise);
  }
  return ds;
}

void write_dataset_csv(const Matrix& inputs, std::span<const std::size_t> labels,
                       const std::filesystem::path& path) {
  if (labels.size() != inputs.rows()) throw std::invalid_argument("write_dataset_csv: label count mismatch");
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "id,label";
  for (std::size_t d = 0; d < inputs.cols(); ++d) os << ",f" << d;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    os << i << ',' << labels[i];
    for (double v : inputs.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

LoadedDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty dataset file");
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  std::vector<double> values;
  LoadedDataset out;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::getline(fields, cell, ',');  // id
    std::getline(fields, cell, ',');
    out.labels.push_back(std::stoul(cell));
    std::size_t count = 0;
    while (std::getline(fields, cell, ',')) {
      values.push_back(std::stod(cell));
      ++count;
    }
    if (count != dim) throw std::runtime_error("dataset row " + std::to_string(rows) + " has wrong width");
    ++rows;
  }
  out.inputs = Matrix(rows, dim);
  std::copy(values.begin(), values.end(), out.inputs.values().begin());
  return out;
}

}  // namespace rgcl::synth
