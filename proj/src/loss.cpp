#include "rgcl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rgcl {

double RgclConfig::g_floor() const noexcept { return std::exp(-hardness_bound / tau_max()); }

void RgclConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid config: " + what); };
  if (!(rho > 0.0)) fail("rho must be > 0");
  if (!(tau0 > 0.0)) fail("tau0 must be > 0");
  if (!(tau_init >= tau0 && tau_init <= tau_max()))
    fail("tau_init must lie in [tau0, tau0 + 2/rho]");
  if (!(beta0 > 0.0 && beta0 <= 1.0)) fail("beta0 must be in (0, 1]");
  if (!(beta1 > 0.0 && beta1 <= 1.0)) fail("beta1 must be in (0, 1]");
  if (!(eta_w >= 0.0)) fail("eta_w must be >= 0");
  if (!(eta_tau >= 0.0)) fail("eta_tau must be >= 0");
  if (tau_grad_scale && !(*tau_grad_scale > 0.0)) fail("tau_grad_scale must be > 0");
  if (!(log_epsilon >= 0.0)) fail("log_epsilon must be >= 0");
}

HardnessVector hardness_scores(std::span<const double> anchor, std::span<const double> positive,
                               const EmbeddingBatch& negatives) {
  if (negatives.rows.rows() == 0) throw std::invalid_argument("no negatives");
  std::vector<std::size_t> rows(negatives.rows.rows());
  for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = j;
  return hardness_scores(anchor, positive, negatives.rows, rows);
}

HardnessVector hardness_scores(std::span<const double> anchor, std::span<const double> positive,
                               const Matrix& pool, std::span<const std::size_t> negative_rows) {
  if (negative_rows.empty()) throw std::invalid_argument("no negatives");
  HardnessVector h;
  h.values.resize(negative_rows.size());
  const double pos_sim = dot(anchor, positive);
  for (std::size_t j = 0; j < negative_rows.size(); ++j)
    h.values[j] = dot(anchor, pool.row(negative_rows[j])) - pos_sim;
  return h;
}

double g_value(const HardnessVector& h, double tau, double log_epsilon) {
  if (h.values.empty()) throw std::invalid_argument("no negatives");
  double acc = 0.0;
  for (double v : h.values) acc += std::exp(v / tau);
  return acc / static_cast<double>(h.size()) + log_epsilon;
}

double g_tau_derivative(const HardnessVector& h, double tau) {
  if (h.values.empty()) throw std::invalid_argument("no negatives");
  double acc = 0.0;
  for (double v : h.values) acc += std::exp(v / tau) * (-v / (tau * tau));
  return acc / static_cast<double>(h.size());
}

namespace {

// log(mean exp(h/tau) + eps)
double log_g(const HardnessVector& h, double tau, double log_epsilon) {
  Vector scaled(h.values.size());
  for (std::size_t j = 0; j < scaled.size(); ++j) scaled[j] = h.values[j] / tau;
  const double log_mean = log_sum_exp(scaled) - std::log(static_cast<double>(scaled.size()));
  if (log_epsilon == 0.0) return log_mean;
  const double log_eps = std::log(log_epsilon);
  return std::max(log_mean, log_eps) + std::log1p(std::exp(-std::abs(log_mean - log_eps)));
}

}  // namespace

double dual_loss_anchor(const HardnessVector& h, double tau, const RgclConfig& cfg) {
  return tau * log_g(h, tau, cfg.log_epsilon) + (tau - cfg.tau0) * cfg.rho;
}

DistributionalWeights p_star(const HardnessVector& h, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("p_star: tau must be > 0");
  Vector scaled(h.values.size());
  for (std::size_t j = 0; j < scaled.size(); ++j) scaled[j] = h.values[j] / tau;
  return {softmax_shifted(scaled)};
}

double kl_uniform(const DistributionalWeights& p) {
  const double m = static_cast<double>(p.size());
  double kl = 0.0;
  for (double pj : p.p)
    if (pj > 0.0) kl += pj * std::log(m * pj);
  return kl < 0.0 ? 0.0 : kl;
}

double primal_rgcl_value(const HardnessVector& h, const DistributionalWeights& p, double tau0) {
  if (h.size() != p.size()) throw std::invalid_argument("primal_rgcl_value: dimension mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < h.size(); ++j) acc += p.p[j] * h.values[j];
  return acc - tau0 * kl_uniform(p);
}

double exact_grad_tau(const HardnessVector& h, double tau, double rho, std::size_t n,
                      double log_epsilon) {
  const double g = g_value(h, tau, log_epsilon);
  const double dg = g_tau_derivative(h, tau);
  return (tau * dg / g + std::log(g) + rho) / static_cast<double>(n);
}

Vector pair_weights_for_w_grad(const HardnessVector& h, double tau, double g_or_s, std::size_t n) {
  if (!(g_or_s > 0.0)) throw std::invalid_argument("pair_weights_for_w_grad: g must be > 0");
  const double denom = static_cast<double>(h.size()) * g_or_s * static_cast<double>(n);
  Vector w(h.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::exp(h.values[j] / tau) / denom;
  return w;
}

void accumulate_term_gradient(const AnchorTerm& term, std::span<const double> weights,
                              const Matrix& anchor_pool, const Matrix& candidate_pool,
                              Matrix& anchor_grad, Matrix& candidate_grad) {
  if (weights.size() != term.negative_rows.size())
    throw std::invalid_argument("accumulate_term_gradient: weight count mismatch");
  const auto anchor = anchor_pool.row(term.anchor_row);
  const auto positive = candidate_pool.row(term.positive_row);
  const std::size_t dim = anchor.size();
  double total = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double w = weights[j];
    total += w;
    const auto neg = candidate_pool.row(term.negative_rows[j]);
    auto g_anchor = anchor_grad.row(term.anchor_row);
    auto g_neg = candidate_grad.row(term.negative_rows[j]);
    for (std::size_t k = 0; k < dim; ++k) {
      g_anchor[k] += w * (neg[k] - positive[k]);
      g_neg[k] += w * anchor[k];
    }
  }
  auto g_pos = candidate_grad.row(term.positive_row);
  for (std::size_t k = 0; k < dim; ++k) g_pos[k] -= total * anchor[k];
}

Matrix stack_views(const ViewPairs& data) {
  const std::size_t n = data.anchor_views.rows();
  if (data.positive_views.rows() != n || data.positive_views.cols() != data.anchor_views.cols())
    throw std::invalid_argument("view pairs disagree in shape");
  Matrix stacked(2 * n, data.anchor_views.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(data.anchor_views.row(i).begin(), data.anchor_views.row(i).end(), stacked.row(i).begin());
    std::copy(data.positive_views.row(i).begin(), data.positive_views.row(i).end(),
              stacked.row(n + i).begin());
  }
  return stacked;
}

AnchorTerm unimodal_term(std::size_t i, std::size_t n) {
  AnchorTerm t;
  t.anchor_row = i;
  t.positive_row = n + i;
  t.negative_rows.reserve(2 * (n - 1));
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    t.negative_rows.push_back(j);
    t.negative_rows.push_back(n + j);
  }
  return t;
}

namespace {

void check_tau(std::span<const double> tau, std::size_t n, const RgclConfig& cfg, const char* who) {
  if (tau.size() != n)
    throw std::invalid_argument(std::string(who) + ": expected " + std::to_string(n) + " temperatures");
  for (double t : tau)
    if (!(t >= cfg.tau0 && t <= cfg.tau_max() * (1.0 + 1e-12)))
      throw std::invalid_argument(std::string(who) + ": temperature outside [tau0, tau_max]");
}

struct TwoWayTerms {
  std::vector<AnchorTerm> image_terms;  // anchor in image pool, candidates in text pool
  std::vector<AnchorTerm> text_terms;   // anchor in text pool, candidates in image pool
};

TwoWayTerms bimodal_terms(std::size_t n) {
  TwoWayTerms t;
  t.image_terms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    AnchorTerm term;
    term.anchor_row = i;
    term.positive_row = i;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) term.negative_rows.push_back(j);
    t.image_terms[i] = term;
  }
  t.text_terms = t.image_terms;
  return t;
}

}  // namespace

double objective_unimodal(const EncoderParams& params, const ViewPairs& data,
                          std::span<const double> tau, const RgclConfig& cfg) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("objective_unimodal: dataset needs at least 2 samples");
  check_tau(tau, n, cfg, "objective_unimodal");
  const EmbeddingBatch emb = encode(params, stack_views(data));
  Vector per_anchor(n);
  parallel_for(n, [&](std::size_t i) {
    const AnchorTerm term = unimodal_term(i, n);
    const HardnessVector h = hardness_scores(emb.rows.row(term.anchor_row),
                                             emb.rows.row(term.positive_row), emb.rows, term.negative_rows);
    per_anchor[i] = dual_loss_anchor(h, tau[i], cfg);
  }, 8);
  double total = 0.0;
  for (double v : per_anchor) total += v;
  return total / static_cast<double>(n);
}

double objective_bimodal(const EncoderParams& image_params, const EncoderParams& text_params,
                         const PairData& data, std::span<const double> tau_image,
                         std::span<const double> tau_text, const RgclConfig& cfg) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("objective_bimodal: dataset needs at least 2 pairs");
  if (data.texts.rows() != n) throw std::invalid_argument("objective_bimodal: pair count mismatch");
  check_tau(tau_image, n, cfg, "objective_bimodal");
  check_tau(tau_text, n, cfg, "objective_bimodal");
  const EmbeddingBatch img = encode(image_params, data.images);
  const EmbeddingBatch txt = encode(text_params, data.texts);
  const TwoWayTerms terms = bimodal_terms(n);
  Vector per_pair(n);
  parallel_for(n, [&](std::size_t i) {
    const AnchorTerm& ti = terms.image_terms[i];
    const AnchorTerm& tt = terms.text_terms[i];
    const HardnessVector hi = hardness_scores(img.rows.row(i), txt.rows.row(i), txt.rows, ti.negative_rows);
    const HardnessVector ht = hardness_scores(txt.rows.row(i), img.rows.row(i), img.rows, tt.negative_rows);
    per_pair[i] = dual_loss_anchor(hi, tau_image[i], cfg) + dual_loss_anchor(ht, tau_text[i], cfg);
  }, 8);
  double total = 0.0;
  for (double v : per_pair) total += v;
  return total / static_cast<double>(n);
}

FullGradient full_gradient_unimodal(const EncoderParams& params, const ViewPairs& data,
                                    std::span<const double> tau, const RgclConfig& cfg) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("full_gradient_unimodal: dataset needs at least 2 samples");
  check_tau(tau, n, cfg, "full_gradient_unimodal");
  const Matrix inputs = stack_views(data);
  const EmbeddingBatch emb = encode(params, inputs);

  std::vector<AnchorTerm> terms(n);
  std::vector<Vector> weights(n);
  Vector losses(n);
  FullGradient out;
  out.grad_tau.resize(n);
  parallel_for(n, [&](std::size_t i) {
    terms[i] = unimodal_term(i, n);
    const HardnessVector h = hardness_scores(emb.rows.row(terms[i].anchor_row),
                                             emb.rows.row(terms[i].positive_row), emb.rows,
                                             terms[i].negative_rows);
    const double g = g_value(h, tau[i], cfg.log_epsilon);
    losses[i] = dual_loss_anchor(h, tau[i], cfg);
    out.grad_tau[i] = exact_grad_tau(h, tau[i], cfg.rho, n, cfg.log_epsilon);
    weights[i] = pair_weights_for_w_grad(h, tau[i], g, n);
  }, 8);

  Matrix grad_emb(inputs.rows(), params.embed_dim());
  for (std::size_t i = 0; i < n; ++i) {
    out.value += losses[i];
    accumulate_term_gradient(terms[i], weights[i], emb.rows, emb.rows, grad_emb, grad_emb);
  }
  out.value /= static_cast<double>(n);
  out.grad_w = encode_backward(params, inputs, grad_emb).flatten();
  return out;
}

FullGradient full_gradient_bimodal(const EncoderParams& image_params,
                                   const EncoderParams& text_params, const PairData& data,
                                   std::span<const double> tau_image,
                                   std::span<const double> tau_text, const RgclConfig& cfg) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("full_gradient_bimodal: dataset needs at least 2 pairs");
  check_tau(tau_image, n, cfg, "full_gradient_bimodal");
  check_tau(tau_text, n, cfg, "full_gradient_bimodal");
  const EmbeddingBatch img = encode(image_params, data.images);
  const EmbeddingBatch txt = encode(text_params, data.texts);
  const TwoWayTerms terms = bimodal_terms(n);

  std::vector<Vector> w_img(n), w_txt(n);
  Vector losses(n);
  FullGradient out;
  out.grad_tau.resize(2 * n);
  parallel_for(n, [&](std::size_t i) {
    const HardnessVector hi = hardness_scores(img.rows.row(i), txt.rows.row(i), txt.rows,
                                              terms.image_terms[i].negative_rows);
    const HardnessVector ht = hardness_scores(txt.rows.row(i), img.rows.row(i), img.rows,
                                              terms.text_terms[i].negative_rows);
    losses[i] = dual_loss_anchor(hi, tau_image[i], cfg) + dual_loss_anchor(ht, tau_text[i], cfg);
    out.grad_tau[i] = exact_grad_tau(hi, tau_image[i], cfg.rho, n, cfg.log_epsilon);
    out.grad_tau[n + i] = exact_grad_tau(ht, tau_text[i], cfg.rho, n, cfg.log_epsilon);
    w_img[i] = pair_weights_for_w_grad(hi, tau_image[i], g_value(hi, tau_image[i], cfg.log_epsilon), n);
    w_txt[i] = pair_weights_for_w_grad(ht, tau_text[i], g_value(ht, tau_text[i], cfg.log_epsilon), n);
  }, 8);

  // Anchor-side and candidate-side contributions are kept apart so that
  // mirrored towers see bitwise identical summation order.
  Matrix img_as_anchor(n, image_params.embed_dim()), img_as_candidate(n, image_params.embed_dim());
  Matrix txt_as_anchor(n, text_params.embed_dim()), txt_as_candidate(n, text_params.embed_dim());
  for (std::size_t i = 0; i < n; ++i) {
    out.value += losses[i];
    accumulate_term_gradient(terms.image_terms[i], w_img[i], img.rows, txt.rows, img_as_anchor,
                             txt_as_candidate);
    accumulate_term_gradient(terms.text_terms[i], w_txt[i], txt.rows, img.rows, txt_as_anchor,
                             img_as_candidate);
  }
  out.value /= static_cast<double>(n);
  const Matrix grad_img = add(img_as_anchor, img_as_candidate);
  const Matrix grad_txt = add(txt_as_anchor, txt_as_candidate);
  out.grad_w = encode_backward(image_params, data.images, grad_img).flatten();
  const Vector gt = encode_backward(text_params, data.texts, grad_txt).flatten();
  out.grad_w.insert(out.grad_w.end(), gt.begin(), gt.end());
  return out;
}

}  // namespace rgcl
