#include "rgcl/dro_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rgcl::oracle {

namespace {

constexpr double kBound = 2.0;

double local_lse(std::span<const double> v) {
  double vmax = v[0];
  for (double x : v) vmax = std::max(vmax, x);
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - vmax);
  return vmax + std::log(acc);
}

// softmax(h / t); t == 0 gives the uniform distribution over the argmax set.
Vector tilted(std::span<const double> h, double t) {
  Vector p(h.size());
  if (t <= 0.0) {
    const double hmax = *std::max_element(h.begin(), h.end());
    double count = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      p[j] = h[j] == hmax ? 1.0 : 0.0;
      count += p[j];
    }
    for (double& v : p) v /= count;
    return p;
  }
  Vector scaled(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) scaled[j] = h[j] / t;
  const double lse = local_lse(scaled);
  for (std::size_t j = 0; j < h.size(); ++j) p[j] = std::exp(scaled[j] - lse);
  return p;
}

double kl_to_uniform(std::span<const double> p) {
  const double m = static_cast<double>(p.size());
  double kl = 0.0;
  for (double v : p)
    if (v > 0.0) kl += v * std::log(m * v);
  return std::max(kl, 0.0);
}

double weighted_value(std::span<const double> h, std::span<const double> p, double tau0) {
  double acc = 0.0;
  for (std::size_t j = 0; j < h.size(); ++j) acc += p[j] * h[j];
  return acc - tau0 * kl_to_uniform(p);
}

}  // namespace

PrimalSolution solve_primal(std::span<const double> h, double rho, double tau0) {
  if (!(rho > 0.0)) throw std::invalid_argument("solve_primal: rho must be > 0");
  if (!(tau0 >= 0.0)) throw std::invalid_argument("solve_primal: tau0 must be >= 0");
  if (h.size() < 2) throw std::invalid_argument("solve_primal: need at least 2 negatives");

  PrimalSolution sol;
  Vector p0 = tilted(h, tau0);
  const double kl0 = kl_to_uniform(p0);
  if (kl0 <= rho) {
    sol.p = std::move(p0);
    sol.kl = kl0;
    sol.objective = weighted_value(h, sol.p, tau0);
    return sol;
  }

  constexpr double kTol = 1e-10;
  constexpr int kMaxIter = 200;
  double lo = 0.0;
  double hi = kBound / rho + 1.0;
  // KL(p(t)) <= range(h) / t, so the bracket can only need widening when range(h) > 2
  while (kl_to_uniform(tilted(h, hi + tau0)) > rho) {
    hi *= 2.0;
    if (++sol.iterations > kMaxIter) throw std::runtime_error("solve_primal: could not bracket the multiplier");
  }
  int iter = 0;
  while (hi - lo > kTol && iter < kMaxIter) {
    const double mid = 0.5 * (lo + hi);
    if (kl_to_uniform(tilted(h, mid + tau0)) > rho)
      lo = mid;
    else
      hi = mid;
    ++iter;
  }
  sol.iterations += iter;
  if (hi - lo > kTol) {
    std::ostringstream msg;
    msg << "solve_primal: bisection did not converge, bracket width " << (hi - lo);
    throw std::runtime_error(msg.str());
  }
  sol.lambda = hi;
  sol.p = tilted(h, hi + tau0);
  sol.kl = kl_to_uniform(sol.p);
  sol.constraint_active = true;
  sol.objective = weighted_value(h, sol.p, tau0);
  return sol;
}

GridSolution grid_search_simplex(std::span<const double> h, double rho, double tau0, double step) {
  if (h.size() > 3 || h.size() < 2) throw std::invalid_argument("grid oracle limited to m in {2, 3}");
  if (!(step > 0.0 && step <= 0.01)) throw std::invalid_argument("grid_search_simplex: step must be in (0, 0.01]");
  const std::size_t free = h.size() - 1;
  GridSolution best;
  best.value = -std::numeric_limits<double>::infinity();
  Vector p(h.size());
  // free coordinates (p_0, ..., p_{m-2}); the last one takes the remaining mass
  auto consider = [&](double a, double b) {
    p[0] = a;
    if (free == 2) p[1] = b;
    const double last = 1.0 - a - (free == 2 ? b : 0.0);
    if (a < 0.0 || b < 0.0 || last < -1e-15) return;
    p[free] = std::max(last, 0.0);
    if (kl_to_uniform(p) > rho) return;
    const double v = weighted_value(h, p, tau0);
    if (v > best.value) {
      best.value = v;
      best.p = p;
    }
  };
  auto sweep = [&](double a0, double b0, double spacing, long half) {
    for (long i = -half; i <= half; ++i)
      for (long j = free == 2 ? -half : 0; j <= (free == 2 ? half : 0); ++j)
        consider(a0 + static_cast<double>(i) * spacing, b0 + static_cast<double>(j) * spacing);
  };

  const long k = std::lround(1.0 / step);
  const double spacing = 1.0 / static_cast<double>(k);
  for (long i = 0; i <= k; ++i)
    for (long j = 0; i + j <= k && (free == 2 || j == 0); ++j)
      consider(static_cast<double>(i) * spacing, static_cast<double>(j) * spacing);

  // Concave objective on a convex set: re-centered sweeps climb to the maximizer
  // at each scale, even where the objective is flat along the KL boundary.
  double cell = spacing;
  for (int round = 0; round < 3 && std::isfinite(best.value); ++round) {
    cell /= 10.0;
    for (int moves = 0; moves < 1000; ++moves) {
      const Vector center = best.p;
      sweep(center[0], free == 2 ? center[1] : 0.0, cell, 30);
      if (best.p == center) break;
    }
  }
  return best;
}

double dual_objective(std::span<const double> h, double tau, double tau0, double rho) {
  Vector scaled(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) scaled[j] = h[j] / tau;
  const double log_mean = local_lse(scaled) - std::log(static_cast<double>(h.size()));
  return tau * log_mean + (tau - tau0) * rho;
}

DualSolution solve_dual_tau(std::span<const double> h, double tau0, double rho, double tol) {
  if (!(tau0 > 0.0) || !(rho > 0.0)) throw std::invalid_argument("solve_dual_tau: tau0 and rho must be > 0");
  if (h.empty()) throw std::invalid_argument("solve_dual_tau: no negatives");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = tau0;
  double b = tau0 + kBound / rho;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = dual_objective(h, c, tau0, rho);
  double fd = dual_objective(h, d, tau0, rho);
  DualSolution sol;
  while (b - a > tol && sol.iterations < 500) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = dual_objective(h, c, tau0, rho);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = dual_objective(h, d, tau0, rho);
    }
    ++sol.iterations;
  }
  sol.tau = 0.5 * (a + b);
  sol.value = dual_objective(h, sol.tau, tau0, rho);
  // boundary minimizers: the endpoints are never probed by the interior points
  for (double edge : {tau0, tau0 + kBound / rho}) {
    const double fe = dual_objective(h, edge, tau0, rho);
    if (fe < sol.value) {
      sol.value = fe;
      sol.tau = edge;
    }
  }
  return sol;
}

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> point, double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) throw std::invalid_argument("finite_diff_grad: step must be in [1e-7, 1e-3]");
  Vector x(point.begin(), point.end());
  Vector grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + step;
    const double fp = f(x);
    x[k] = orig - step;
    const double fm = f(x);
    x[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(k));
    grad[k] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

namespace {

struct AnchorPiece {
  double loss = 0.0;
  double grad_tau = 0.0;
};

// Straight-line per-anchor computation; writes embedding gradients directly.
// cand_grad receives the positive and negative contributions, anchor_grad the anchor's.
AnchorPiece reference_anchor(std::span<const double> anchor, std::span<const double> positive,
                             const Matrix& candidates, std::span<const std::size_t> negatives,
                             double tau, double n, const RgclConfig& cfg, std::span<double> anchor_grad,
                             Matrix& cand_grad, std::size_t positive_row) {
  const std::size_t m = negatives.size();
  const std::size_t dim = anchor.size();
  double pos = 0.0;
  for (std::size_t k = 0; k < dim; ++k) pos += anchor[k] * positive[k];
  Vector h(m), e(m);
  double hmax = -1e300;
  for (std::size_t j = 0; j < m; ++j) {
    const auto z = candidates.row(negatives[j]);
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += anchor[k] * z[k];
    h[j] = s - pos;
    hmax = std::max(hmax, h[j] / tau);
  }
  double sum_shifted = 0.0, sum_lin = 0.0, sum_dtau = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    e[j] = std::exp(h[j] / tau);
    sum_lin += e[j];
    sum_shifted += std::exp(h[j] / tau - hmax);
    sum_dtau += e[j] * (-h[j] / (tau * tau));
  }
  const double md = static_cast<double>(m);
  const double g = sum_lin / md + cfg.log_epsilon;
  double log_g = hmax + std::log(sum_shifted / md);
  if (cfg.log_epsilon > 0.0) log_g = std::log(std::exp(log_g) + cfg.log_epsilon);

  AnchorPiece out;
  out.loss = tau * log_g + (tau - cfg.tau0) * cfg.rho;
  out.grad_tau = (log_g + tau * (sum_dtau / md) / g + cfg.rho) / n;

  // d loss / d h_j = e_j / (m g); F carries a further 1/n
  auto gpos = cand_grad.row(positive_row);
  for (std::size_t j = 0; j < m; ++j) {
    const double c = e[j] / (md * g * n);
    const auto z = candidates.row(negatives[j]);
    auto gz = cand_grad.row(negatives[j]);
    for (std::size_t k = 0; k < dim; ++k) {
      anchor_grad[k] += c * (z[k] - positive[k]);
      gz[k] += c * anchor[k];
      gpos[k] -= c * anchor[k];
    }
  }
  return out;
}

}  // namespace

ReferenceGradient full_batch_reference(const EncoderParams& params, const ViewPairs& data,
                                       std::span<const double> tau, const RgclConfig& cfg) {
  const std::size_t n = data.size();
  if (n > kReferenceCap) throw std::invalid_argument("full_batch_reference: n exceeds the desk-scale cap of 256");
  if (n < 2) throw std::invalid_argument("full_batch_reference: need at least 2 samples");
  if (tau.size() != n) throw std::invalid_argument("full_batch_reference: temperature count mismatch");

  Matrix inputs(2 * n, data.anchor_views.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < inputs.cols(); ++c) {
      inputs(i, c) = data.anchor_views(i, c);
      inputs(n + i, c) = data.positive_views(i, c);
    }
  }
  const Matrix emb = encode(params, inputs).rows;
  Matrix grad_emb(2 * n, emb.cols());
  ReferenceGradient out;
  out.grad_tau.resize(n);
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < n; ++i) {
    negatives.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      negatives.push_back(j);
      negatives.push_back(n + j);
    }
    const AnchorPiece piece = reference_anchor(emb.row(i), emb.row(n + i), emb, negatives, tau[i],
                                               static_cast<double>(n), cfg, grad_emb.row(i), grad_emb, n + i);
    out.value += piece.loss;
    out.grad_tau[i] = piece.grad_tau;
  }
  out.value /= static_cast<double>(n);
  out.grad_w = encode_backward(params, inputs, grad_emb).flatten();
  return out;
}

ReferenceGradient full_batch_reference_bimodal(const EncoderParams& image_params,
                                               const EncoderParams& text_params,
                                               const PairData& data,
                                               std::span<const double> tau_image,
                                               std::span<const double> tau_text,
                                               const RgclConfig& cfg) {
  const std::size_t n = data.size();
  if (n > kReferenceCap) throw std::invalid_argument("full_batch_reference: n exceeds the desk-scale cap of 256");
  if (n < 2) throw std::invalid_argument("full_batch_reference: need at least 2 pairs");
  if (tau_image.size() != n || tau_text.size() != n)
    throw std::invalid_argument("full_batch_reference: temperature count mismatch");

  const Matrix img = encode(image_params, data.images).rows;
  const Matrix txt = encode(text_params, data.texts).rows;
  Matrix grad_img(n, img.cols()), grad_txt(n, txt.cols());
  ReferenceGradient out;
  out.grad_tau.resize(2 * n);
  std::vector<std::size_t> negatives;
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    negatives.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) negatives.push_back(j);
    const AnchorPiece a = reference_anchor(img.row(i), txt.row(i), txt, negatives, tau_image[i], nd, cfg,
                                           grad_img.row(i), grad_txt, i);
    const AnchorPiece b = reference_anchor(txt.row(i), img.row(i), img, negatives, tau_text[i], nd, cfg,
                                           grad_txt.row(i), grad_img, i);
    out.value += a.loss + b.loss;
    out.grad_tau[i] = a.grad_tau;
    out.grad_tau[n + i] = b.grad_tau;
  }
  out.value /= nd;
  out.grad_w = encode_backward(image_params, data.images, grad_img).flatten();
  const Vector gt = encode_backward(text_params, data.texts, grad_txt).flatten();
  out.grad_w.insert(out.grad_w.end(), gt.begin(), gt.end());
  return out;
}

}  // namespace rgcl::oracle
