#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rgcl/encoder.hpp"
#include "rgcl/loss.hpp"
#include "rgcl/numerics.hpp"

namespace rgcl {

/// Per-anchor optimizer state: moving average s of g, temperature momentum u, temperature.
struct AnchorState {
  double s = 0.0;
  double u = 0.0;
  double tau = 0.0;
  bool initialized = false;

  bool operator==(const AnchorState&) const = default;
};

struct BimodalAnchorState {
  AnchorState image;
  AnchorState text;

  bool operator==(const BimodalAnchorState&) const = default;
};

/// momentum: heavy-ball style momentum on w and tau.
/// adam: Adam on w (bias-corrected), momentum on tau.
/// fixed_tau: momentum on w, temperatures frozen at tau_init.
enum class OptimizerMode { momentum, adam, fixed_tau };

/// Adam constants for the w update. beta1/beta2 are the usual decay rates
/// (first moment m <- beta1 m + (1 - beta1) G).
struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamSettings&) const = default;
};

/// Parameter-side buffers shared by the unimodal and bimodal optimizers.
struct ParameterMoments {
  Vector velocity;       // momentum buffer v, or Adam first moment
  Vector second_moment;  // Adam only

  bool operator==(const ParameterMoments&) const = default;
};

struct OptimizerState {
  OptimizerMode mode = OptimizerMode::momentum;
  AdamSettings adam;
  ParameterMoments moments;
  std::vector<AnchorState> anchors;
  std::uint64_t step = 0;

  static OptimizerState create(std::size_t n, std::size_t param_count, const RgclConfig& cfg,
                               OptimizerMode mode = OptimizerMode::momentum);
  bool operator==(const OptimizerState&) const = default;
};

struct BimodalOptimizerState {
  OptimizerMode mode = OptimizerMode::momentum;
  AdamSettings adam;
  ParameterMoments moments;  // image tower parameters, then text tower parameters
  std::vector<BimodalAnchorState> anchors;
  std::uint64_t step = 0;

  static BimodalOptimizerState create(std::size_t n, std::size_t param_count,
                                      const RgclConfig& cfg,
                                      OptimizerMode mode = OptimizerMode::momentum);
  bool operator==(const BimodalOptimizerState&) const = default;
};

struct Batch {
  std::vector<std::size_t> indices;
  /// Seeds of the two augmentation draws (A, A') for each batch member.
  std::vector<std::array<std::uint64_t, 2>> view_seeds;
};

/// B distinct indices, uniform without replacement (partial Fisher-Yates).
Batch sample_batch(RandomStream& stream, std::size_t n, std::size_t batch_size);

/// s <- (1 - beta0) s + beta0 g; the first update of an anchor sets s = g.
double update_s(AnchorState& state, double g_batch, double beta0);

/// scale * (1/n) [tau g'(tau)/s + log s + rho] using the batch hardness values.
double grad_tau_estimator(const AnchorState& state, const HardnessVector& h_batch, double rho,
                          std::size_t n, double tau_grad_scale);

/// One anchor's contribution to G(w): hardness values plus the (tau, s) it is weighted with.
struct WeightedTerm {
  AnchorTerm term;
  HardnessVector h;
  double tau = 0.0;
  double s = 0.0;
};

/// G(w) = (1/B) sum_i (tau_i / s_i) grad_w g_i(B_i), for terms over one embedding pool.
Vector grad_w_estimator(std::span<const WeightedTerm> terms, const Matrix& embeddings,
                        const Matrix& inputs, const EncoderParams& params, std::size_t batch_size);

double project_tau(double tau, const RgclConfig& cfg);

/// Data handed to the unimodal step: raw inputs plus augmentation noise scale.
struct UnimodalTask {
  const Matrix& inputs;
  double augment_strength = 0.0;
};

struct StepOptions {
  /// Fault injection for verification runs only.
  bool disable_tau_projection = false;
  /// Keep the view matrices used in the step in the diagnostics.
  bool keep_views = false;
};

struct StepDiagnostics {
  Batch batch;
  Vector g_batch;     // per batch member (bimodal: image side then text side)
  Vector grad_tau;    // G(tau) per batch member, same layout as g_batch
  Vector grad_w;      // G(w)
  Vector tau_before;  // temperatures used for the step, same layout as g_batch
  ViewPairs views;    // unimodal, filled when keep_views
};

/// One iteration of the per-anchor-temperature optimizer. The step's randomness is
/// stream.split("step", opt.step), so a run is a pure function of (seed, step).
StepDiagnostics step_unimodal(OptimizerState& opt, EncoderParams& params, const UnimodalTask& task,
                              std::size_t batch_size, const RgclConfig& cfg,
                              const RandomStream& stream, const StepOptions& options = {});

/// Fixed-temperature baseline; requires every tau == cfg.tau_init.
StepDiagnostics step_sogclr_baseline(OptimizerState& opt, EncoderParams& params,
                                     const UnimodalTask& task, std::size_t batch_size,
                                     const RgclConfig& cfg, const RandomStream& stream);

/// Two-tower step. Negatives of image i are the other batch texts and vice versa.
StepDiagnostics step_bimodal(BimodalOptimizerState& opt, EncoderParams& image_params,
                             EncoderParams& text_params, const PairData& data,
                             std::size_t batch_size, const RgclConfig& cfg,
                             const RandomStream& stream, const StepOptions& options = {});

/// Materializes the two augmented views of each batch member.
ViewPairs batch_views(const Matrix& inputs, const Batch& batch, double augment_strength);

/// Optimizer checkpoint, little-endian:
///   char[8] "RGCLOPT1" | u32 version=1 | u32 mode (0 momentum, 1 adam, 2 fixed_tau)
///   | u32 modalities (1 or 2) | u32 reserved=0 | u64 step | u64 n_anchors | u64 param_len
///   | f64 adam beta1, beta2, epsilon | f64[param_len] velocity | f64[param_len] second moment
///   | per anchor and modality: f64 s, f64 u, f64 tau, f64 initialized (0 or 1)
void save_optimizer(const OptimizerState& opt, const std::filesystem::path& path);
void save_optimizer(const BimodalOptimizerState& opt, const std::filesystem::path& path);
OptimizerState load_optimizer(const std::filesystem::path& path);
BimodalOptimizerState load_bimodal_optimizer(const std::filesystem::path& path);

}  // namespace rgcl
