#pragma once

// Reference solvers for the KL-constrained worst-case weighting and the
// temperature dual. Nothing here calls into the loss module, so the two can
// be checked against each other.

#include <functional>
#include <span>

#include "rgcl/encoder.hpp"
#include "rgcl/loss.hpp"
#include "rgcl/numerics.hpp"

namespace rgcl::oracle {

struct PrimalSolution {
  Vector p;
  double lambda = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  bool constraint_active = false;
  int iterations = 0;
};

/// max_p sum p_j h_j - tau0 KL(p, 1/m) s.t. KL(p, 1/m) <= rho, via bisection on the
/// multiplier of the KL constraint: p(lambda) = softmax(h / (lambda + tau0)).
/// tau0 == 0 is allowed; lambda = 0 then means the one-hot (argmax) limit.
PrimalSolution solve_primal(std::span<const double> h, double rho, double tau0);

struct GridSolution {
  Vector p;
  double value = 0.0;
};

/// Exhaustive search over the simplex lattice with spacing `step` (m = 2 or 3),
/// then three 10x finer scales of +-30 cell sweeps, re-centered on the incumbent
/// until it stops moving.
GridSolution grid_search_simplex(std::span<const double> h, double rho, double tau0, double step);

struct DualSolution {
  double tau = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// tau log mean exp(h / tau) + (tau - tau0) rho, evaluated independently of the loss module.
double dual_objective(std::span<const double> h, double tau, double tau0, double rho);

/// Golden-section minimization of dual_objective over [tau0, tau0 + 2/rho].
DualSolution solve_dual_tau(std::span<const double> h, double tau0, double rho, double tol = 1e-10);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences per coordinate. step must lie in [1e-7, 1e-3].
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> point, double step);

struct ReferenceGradient {
  double value = 0.0;
  Vector grad_w;
  Vector grad_tau;
};

constexpr std::size_t kReferenceCap = 256;

/// Straight-line objective and exact gradients with full negative sets (n <= 256).
ReferenceGradient full_batch_reference(const EncoderParams& params, const ViewPairs& data,
                                       std::span<const double> tau, const RgclConfig& cfg);

/// Two-tower version; grad_w is image tower then text tower, grad_tau image then text.
ReferenceGradient full_batch_reference_bimodal(const EncoderParams& image_params,
                                               const EncoderParams& text_params,
                                               const PairData& data,
                                               std::span<const double> tau_image,
                                               std::span<const double> tau_text,
                                               const RgclConfig& cfg);

}  // namespace rgcl::oracle
