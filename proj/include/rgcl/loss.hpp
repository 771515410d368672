#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rgcl/encoder.hpp"
#include "rgcl/numerics.hpp"

namespace rgcl {

/// Loss and optimizer hyperparameters. tau_max and g_floor are derived on
/// every call so they track rho and tau0.
struct RgclConfig {
  /// |h| <= 2 for differences of inner products of unit vectors.
  static constexpr double hardness_bound = 2.0;

  double rho = 0.3;
  double tau0 = 0.05;
  double tau_init = 0.7;
  double beta0 = 0.9;
  double beta1 = 0.1;
  double eta_w = 0.1;
  double eta_tau = 0.1;
  /// Multiplier on the temperature gradient estimate; unset means "use n".
  std::optional<double> tau_grad_scale;
  /// Added to g inside the log.
  double log_epsilon = 0.0;
  /// Adds the swapped (positive-as-anchor) term for every sample.
  bool symmetrize = false;

  double tau_max() const noexcept { return tau0 + hardness_bound / rho; }
  double g_floor() const noexcept;
  double tau_scale(std::size_t n) const noexcept {
    return tau_grad_scale ? *tau_grad_scale : static_cast<double>(n);
  }

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

struct HardnessVector {
  Vector values;
  std::size_t anchor = 0;
  double bound = RgclConfig::hardness_bound;

  std::size_t size() const noexcept { return values.size(); }
};

/// Simplex weights over an anchor's negatives.
struct DistributionalWeights {
  Vector p;
  std::size_t size() const noexcept { return p.size(); }
};

/// h_j = <anchor, neg_j> - <anchor, positive>. Throws "no negatives" on empty set.
HardnessVector hardness_scores(std::span<const double> anchor, std::span<const double> positive,
                               const EmbeddingBatch& negatives);
/// Same, with negatives given as row indices into pool.
HardnessVector hardness_scores(std::span<const double> anchor, std::span<const double> positive,
                               const Matrix& pool, std::span<const std::size_t> negative_rows);

/// mean_j exp(h_j / tau) + log_epsilon.
double g_value(const HardnessVector& h, double tau, double log_epsilon = 0.0);

/// d/dtau of mean_j exp(h_j / tau).
double g_tau_derivative(const HardnessVector& h, double tau);

/// tau log g(h, tau) + (tau - tau0) rho, evaluated in log space.
double dual_loss_anchor(const HardnessVector& h, double tau, const RgclConfig& cfg);

DistributionalWeights p_star(const HardnessVector& h, double tau);

/// sum_j p_j h_j - tau0 KL(p, 1/m).
double primal_rgcl_value(const HardnessVector& h, const DistributionalWeights& p, double tau0);

/// KL(p, uniform) with 0 log 0 = 0.
double kl_uniform(const DistributionalWeights& p);

/// (1/n) [tau g'(tau)/g + log g + rho].
double exact_grad_tau(const HardnessVector& h, double tau, double rho, std::size_t n,
                      double log_epsilon = 0.0);

/// weight_j = exp(h_j/tau) / (m * g_or_s * n): the coefficient of grad_w h_j
/// in the anchor's contribution to grad_w F when g_or_s is the full-set g.
Vector pair_weights_for_w_grad(const HardnessVector& h, double tau, double g_or_s, std::size_t n);

/// One anchor's loss term. Candidate rows (positive and negatives) may live in a
/// different pool than the anchor row, as in the two-tower case.
struct AnchorTerm {
  std::size_t anchor_row = 0;
  std::size_t positive_row = 0;
  std::vector<std::size_t> negative_rows;
};

/// Adds the embedding-space gradient of sum_j weight_j h_j:
/// anchor gets sum_j w_j (neg_j - pos), neg_j gets w_j anchor, positive gets -sum_j w_j anchor.
/// anchor_grad and candidate_grad may alias when the pools are the same matrix.
void accumulate_term_gradient(const AnchorTerm& term, std::span<const double> weights,
                              const Matrix& anchor_pool, const Matrix& candidate_pool,
                              Matrix& anchor_grad, Matrix& candidate_grad);

/// Unimodal samples with fixed augmentation draws: row i of anchor_views is
/// A(x_i), row i of positive_views is A'(x_i).
struct ViewPairs {
  Matrix anchor_views;
  Matrix positive_views;
  std::size_t size() const noexcept { return anchor_views.rows(); }
};

/// Image-text pairs; row i of each matrix belongs to pair i.
struct PairData {
  Matrix images;
  Matrix texts;
  std::size_t size() const noexcept { return images.rows(); }
};

/// Stacks anchor views on top of positive views (2n rows).
Matrix stack_views(const ViewPairs& data);

/// Term for anchor i over the stacked 2n views: positive n+i, negatives are
/// both views of every j != i (ordered j ascending, A before A').
AnchorTerm unimodal_term(std::size_t i, std::size_t n);

/// F(w, tau) = (1/n) sum_i dual_loss_anchor(h_i, tau_i).
double objective_unimodal(const EncoderParams& params, const ViewPairs& data,
                          std::span<const double> tau, const RgclConfig& cfg);

/// Sum over both directions: image anchors against other texts, text anchors
/// against other images, each with its own temperature.
double objective_bimodal(const EncoderParams& image_params, const EncoderParams& text_params,
                         const PairData& data, std::span<const double> tau_image,
                         std::span<const double> tau_text, const RgclConfig& cfg);

struct FullGradient {
  double value = 0.0;
  Vector grad_w;    // flattened; bimodal: image tower then text tower
  Vector grad_tau;  // unimodal: n; bimodal: image temperatures then text temperatures
};

/// Exact objective and gradients with full negative sets.
FullGradient full_gradient_unimodal(const EncoderParams& params, const ViewPairs& data,
                                    std::span<const double> tau, const RgclConfig& cfg);

FullGradient full_gradient_bimodal(const EncoderParams& image_params,
                                   const EncoderParams& text_params, const PairData& data,
                                   std::span<const double> tau_image,
                                   std::span<const double> tau_text, const RgclConfig& cfg);

}  // namespace rgcl
