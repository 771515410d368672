#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rgcl/datasynth.hpp"
#include "rgcl/encoder.hpp"
#include "rgcl/isogclr.hpp"
#include "rgcl/loss.hpp"
#include "rgcl/numerics.hpp"

namespace rgcl {

enum class TrainMode { isogclr, sogclr_baseline, bimodal };

/// Everything a run depends on. Serialized as one flat JSON object; keys not
/// listed in to_json() are rejected.
struct ExperimentConfig {
  TrainMode mode = TrainMode::isogclr;
  OptimizerMode optimizer = OptimizerMode::momentum;
  RgclConfig loss;

  std::size_t clusters = 10;
  std::size_t samples = 2000;
  double imbalance_ratio = 100.0;
  std::size_t input_dim = 16;
  double noise = 0.1;
  double augment_strength = 0.1;
  std::size_t latent_dim = 8;
  std::size_t image_dim = 16;
  std::size_t text_dim = 16;
  bool mirrored = false;

  std::size_t hidden_dim = 32;
  std::size_t embed_dim = 8;
  Activation activation = Activation::tanh;

  std::size_t batch_size = 128;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  std::string out_dir = "rgcl_out";

  std::size_t knn_k = 5;
  double held_out_fraction = 0.2;
  /// Exact full-batch objective and gradient mapping every this many epochs.
  std::size_t eval_every = 10;

  /// Throws std::invalid_argument on the first inconsistent field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Starts from defaults; unknown keys and wrong types throw std::invalid_argument.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// `key=value`; value is parsed as JSON when possible, else taken as a string.
  void apply_override(const std::string& assignment);
};

std::string to_string(TrainMode mode);

/// Hex fnv1a64 over the code version tag and the canonical config dump.
std::string config_hash(const ExperimentConfig& cfg);

/// Held-out kNN vote under cosine similarity. The first round(held_out_fraction * n)
/// entries of a stream-drawn permutation form the query set. Neighbor ties go to the
/// lower row, vote ties to the lowest class id.
double knn_accuracy(const Matrix& embeddings, std::span<const std::size_t> labels, std::size_t k,
                    double held_out_fraction, RandomStream& stream);

/// Header `index,label,tau,s`, one row per anchor, 17 significant digits.
void export_tau_csv(std::span<const AnchorState> anchors, std::span<const std::size_t> labels,
                    const std::filesystem::path& path);

struct TauRow {
  std::size_t index = 0;
  std::size_t label = 0;
  double tau = 0.0;
  double s = 0.0;
};
std::vector<TauRow> read_tau_csv(const std::filesystem::path& path);

struct TemperatureSummary {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  Vector cluster_mean;          // indexed by cluster id
  double spearman_size_tau = 0.0;
  double head3_mean = 0.0;      // mean over the three largest clusters
  double tail3_mean = 0.0;      // mean over the three smallest clusters

  nlohmann::json to_json() const;
};

TemperatureSummary summarize_temperatures(std::span<const double> tau,
                                          std::span<const std::size_t> labels,
                                          std::span<const std::size_t> cluster_sizes);

struct Checkpoint {
  std::size_t epoch = 0;
  double exact_objective = 0.0;
  double grad_mapping_sq = 0.0;
};

struct Report {
  ExperimentConfig config;
  std::string hash;
  std::vector<double> objective_estimate;  // one per epoch, from the moving averages s
  std::vector<Checkpoint> checkpoints;     // epoch 0 and every eval_every epochs, plus the last
  Vector tau;                              // bimodal: image side
  Vector tau_text;                         // bimodal only
  TemperatureSummary tau_summary;
  std::optional<TemperatureSummary> tau_text_summary;
  double knn_accuracy = 0.0;
  std::size_t steps = 0;
  double min_g_seen = 0.0;
  double min_s_seen = 0.0;
  double wall_clock_seconds = 0.0;

  /// Wall-clock figures live under the "wall_clock" key only.
  nlohmann::json to_json() const;
};

/// Mean over stationarity checkpoints in the last and first 10% (at least one each).
double stationarity_ratio(std::span<const Checkpoint> checkpoints);

/// Trains and writes report.json, tau.csv, metrics.csv, encoder.bin and optimizer.bin
/// into cfg.out_dir (when write_files).
Report run_train_unimodal(const ExperimentConfig& cfg, bool write_files = true);
Report run_train_bimodal(const ExperimentConfig& cfg, bool write_files = true);

/// Generates the configured dataset and writes dataset.csv (bimodal: plus
/// dataset_text.csv) and report.json.
nlohmann::json run_gen_data(const ExperimentConfig& cfg);

/// Long-tail or latent dataset for the configured mode, as the training loops build it.
synth::SynthDataset make_unimodal_dataset(const ExperimentConfig& cfg);
synth::BimodalSynthDataset make_bimodal_dataset(const ExperimentConfig& cfg);

struct CheckResult {
  std::string name;
  bool passed = false;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  bool disable_tau_projection = false;  // fault injection
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
  nlohmann::json to_json() const;
};

VerifyReport run_verify(const VerifyOptions& options);

/// Writes `doc` with two-space indentation and a trailing newline.
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace rgcl
