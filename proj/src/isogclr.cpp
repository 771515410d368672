#include "rgcl/isogclr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "rgcl/datasynth.hpp"

namespace rgcl {

namespace {

AnchorState fresh_anchor(const RgclConfig& cfg) {
  AnchorState a;
  a.tau = cfg.tau_init;
  return a;
}

ParameterMoments fresh_moments(std::size_t param_count, OptimizerMode mode) {
  ParameterMoments m;
  m.velocity.assign(param_count, 0.0);
  if (mode == OptimizerMode::adam) m.second_moment.assign(param_count, 0.0);
  return m;
}

// w <- w - eta v with v the momentum (or Adam) direction. step_count is 1-based.
void apply_parameter_update(ParameterMoments& m, OptimizerMode mode, const AdamSettings& adam,
                            std::uint64_t step_count, std::span<double> w,
                            std::span<const double> grad, const RgclConfig& cfg) {
  if (m.velocity.size() != w.size() || grad.size() != w.size())
    throw std::invalid_argument("optimizer buffers do not match the parameter count");
  if (mode == OptimizerMode::adam) {
    if (m.second_moment.size() != w.size()) m.second_moment.assign(w.size(), 0.0);
    const double t = static_cast<double>(step_count);
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    for (std::size_t k = 0; k < w.size(); ++k) {
      m.velocity[k] = adam.beta1 * m.velocity[k] + (1.0 - adam.beta1) * grad[k];
      m.second_moment[k] = adam.beta2 * m.second_moment[k] + (1.0 - adam.beta2) * grad[k] * grad[k];
      const double m_hat = m.velocity[k] / c1;
      const double v_hat = m.second_moment[k] / c2;
      w[k] -= cfg.eta_w * m_hat / (std::sqrt(v_hat) + adam.epsilon);
    }
    return;
  }
  for (std::size_t k = 0; k < w.size(); ++k) {
    m.velocity[k] = (1.0 - cfg.beta1) * m.velocity[k] + cfg.beta1 * grad[k];
    w[k] -= cfg.eta_w * m.velocity[k];
  }
}

// One anchor: g, s, G(tau), u, tau. Returns (g, G(tau)).
std::pair<double, double> update_anchor(AnchorState& state, const HardnessVector& h, std::size_t n,
                                        const RgclConfig& cfg, OptimizerMode mode,
                                        const StepOptions& options) {
  const double g = g_value(h, state.tau, cfg.log_epsilon);
  update_s(state, g, cfg.beta0);
  const double grad = grad_tau_estimator(state, h, cfg.rho, n, cfg.tau_scale(n));
  state.u = (1.0 - cfg.beta1) * state.u + cfg.beta1 * grad;
  if (mode != OptimizerMode::fixed_tau) {
    const double next = state.tau - cfg.eta_tau * state.u;
    state.tau = options.disable_tau_projection ? next : project_tau(next, cfg);
  }
  return {g, grad};
}

Vector term_weights(const WeightedTerm& t, std::size_t batch_size) {
  return pair_weights_for_w_grad(t.h, t.tau, t.s, batch_size);
}

void check_batch_size(std::size_t n, std::size_t batch_size) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
  if (batch_size > n)
    throw std::invalid_argument("batch size " + std::to_string(batch_size) +
                                " exceeds dataset size " + std::to_string(n));
}

}  // namespace

OptimizerState OptimizerState::create(std::size_t n, std::size_t param_count,
                                       const RgclConfig& cfg, OptimizerMode mode) {
  OptimizerState s;
  s.mode = mode;
  s.moments = fresh_moments(param_count, mode);
  s.anchors.assign(n, fresh_anchor(cfg));
  return s;
}

BimodalOptimizerState BimodalOptimizerState::create(std::size_t n, std::size_t param_count,
                                                    const RgclConfig& cfg, OptimizerMode mode) {
  BimodalOptimizerState s;
  s.mode = mode;
  s.moments = fresh_moments(param_count, mode);
  s.anchors.assign(n, BimodalAnchorState{fresh_anchor(cfg), fresh_anchor(cfg)});
  return s;
}

Batch sample_batch(RandomStream& stream, std::size_t n, std::size_t batch_size) {
  check_batch_size(n, batch_size);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Batch batch;
  batch.indices.resize(batch_size);
  batch.view_seeds.resize(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(stream.uniform_below(n - k));
    std::swap(perm[k], perm[j]);
    batch.indices[k] = perm[k];
  }
  for (auto& seeds : batch.view_seeds) seeds = {stream.next_u64(), stream.next_u64()};
  return batch;
}

double update_s(AnchorState& state, double g_batch, double beta0) {
  if (!state.initialized) {
    state.s = g_batch;
    state.initialized = true;
  } else {
    state.s = (1.0 - beta0) * state.s + beta0 * g_batch;
  }
  return state.s;
}

double grad_tau_estimator(const AnchorState& state, const HardnessVector& h_batch, double rho,
                          std::size_t n, double tau_grad_scale) {
  if (!state.initialized) throw std::logic_error("grad_tau_estimator: anchor state not initialized");
  if (!(state.s > 0.0)) throw std::logic_error("grad_tau_estimator: s must be > 0");
  const double dg = g_tau_derivative(h_batch, state.tau);
  return tau_grad_scale * (state.tau * dg / state.s + std::log(state.s) + rho) /
         static_cast<double>(n);
}

Vector grad_w_estimator(std::span<const WeightedTerm> terms, const Matrix& embeddings,
                        const Matrix& inputs, const EncoderParams& params, std::size_t batch_size) {
  if (embeddings.rows() != inputs.rows() || embeddings.cols() != params.embed_dim())
    throw std::invalid_argument("grad_w_estimator: embedding shape mismatch");
  Matrix grad_emb(embeddings.rows(), embeddings.cols());
  for (const WeightedTerm& t : terms)
    accumulate_term_gradient(t.term, term_weights(t, batch_size), embeddings, embeddings, grad_emb,
                             grad_emb);
  return encode_backward(params, inputs, grad_emb).flatten();
}

double project_tau(double tau, const RgclConfig& cfg) {
  return std::clamp(tau, cfg.tau0, cfg.tau_max());
}

ViewPairs batch_views(const Matrix& inputs, const Batch& batch, double augment_strength) {
  const std::size_t b = batch.indices.size();
  ViewPairs views{Matrix(b, inputs.cols()), Matrix(b, inputs.cols())};
  for (std::size_t k = 0; k < b; ++k) {
    const auto x = inputs.row(batch.indices[k]);
    RandomStream first(batch.view_seeds[k][0]);
    RandomStream second(batch.view_seeds[k][1]);
    const Vector a = synth::augment(x, augment_strength, first);
    const Vector p = synth::augment(x, augment_strength, second);
    std::copy(a.begin(), a.end(), views.anchor_views.row(k).begin());
    std::copy(p.begin(), p.end(), views.positive_views.row(k).begin());
  }
  return views;
}

StepDiagnostics step_unimodal(OptimizerState& opt, EncoderParams& params, const UnimodalTask& task,
                              std::size_t batch_size, const RgclConfig& cfg,
                              const RandomStream& stream, const StepOptions& options) {
  cfg.validate();
  const std::size_t n = task.inputs.rows();
  if (opt.anchors.size() != n)
    throw std::invalid_argument("optimizer state covers " + std::to_string(opt.anchors.size()) +
                                " anchors, dataset has " + std::to_string(n));
  check_batch_size(n, batch_size);

  RandomStream step_stream = stream.split("step", opt.step);
  StepDiagnostics diag;
  diag.batch = sample_batch(step_stream, n, batch_size);
  ViewPairs views = batch_views(task.inputs, diag.batch, task.augment_strength);
  const Matrix stacked = stack_views(views);
  const EmbeddingBatch emb = encode(params, stacked);

  const std::size_t b = batch_size;
  const std::size_t terms_per_anchor = cfg.symmetrize ? 2 : 1;
  std::vector<WeightedTerm> terms(b * terms_per_anchor);
  diag.g_batch.resize(b);
  diag.grad_tau.resize(b);
  diag.tau_before.resize(b);

  parallel_for(b, [&](std::size_t k) {
    AnchorState& state = opt.anchors[diag.batch.indices[k]];
    WeightedTerm& forward = terms[k * terms_per_anchor];
    forward.term = unimodal_term(k, b);
    forward.h = hardness_scores(emb.rows.row(forward.term.anchor_row),
                                emb.rows.row(forward.term.positive_row), emb.rows,
                                forward.term.negative_rows);
    HardnessVector h_all = forward.h;
    if (cfg.symmetrize) {
      // swapped roles: A'(x) anchors against the same negative set with A(x) as positive
      WeightedTerm& swapped = terms[k * terms_per_anchor + 1];
      swapped.term = forward.term;
      std::swap(swapped.term.anchor_row, swapped.term.positive_row);
      swapped.h = hardness_scores(emb.rows.row(swapped.term.anchor_row),
                                  emb.rows.row(swapped.term.positive_row), emb.rows,
                                  swapped.term.negative_rows);
      h_all.values.insert(h_all.values.end(), swapped.h.values.begin(), swapped.h.values.end());
    }
    diag.tau_before[k] = state.tau;
    const auto [g, grad] = update_anchor(state, h_all, n, cfg, opt.mode, options);
    diag.g_batch[k] = g;
    diag.grad_tau[k] = grad;
    for (std::size_t r = 0; r < terms_per_anchor; ++r) {
      WeightedTerm& t = terms[k * terms_per_anchor + r];
      t.tau = diag.tau_before[k];
      // each half of a symmetrized pair carries half the mass of the joint mean
      t.s = state.s * static_cast<double>(terms_per_anchor);
    }
  }, 16);

  diag.grad_w = grad_w_estimator(terms, emb.rows, stacked, params, b);
  Vector w = params.flatten();
  ++opt.step;
  apply_parameter_update(opt.moments, opt.mode, opt.adam, opt.step, w, diag.grad_w, cfg);
  params.assign_flat(w);
  if (options.keep_views) diag.views = std::move(views);
  return diag;
}

StepDiagnostics step_sogclr_baseline(OptimizerState& opt, EncoderParams& params,
                                     const UnimodalTask& task, std::size_t batch_size,
                                     const RgclConfig& cfg, const RandomStream& stream) {
  for (const AnchorState& a : opt.anchors)
    if (a.tau != cfg.tau_init)
      throw std::logic_error("baseline step requires every temperature at tau_init");
  const OptimizerMode saved = opt.mode;
  opt.mode = OptimizerMode::fixed_tau;
  try {
    StepDiagnostics d = step_unimodal(opt, params, task, batch_size, cfg, stream);
    opt.mode = saved;
    return d;
  } catch (...) {
    opt.mode = saved;
    throw;
  }
}

StepDiagnostics step_bimodal(BimodalOptimizerState& opt, EncoderParams& image_params,
                             EncoderParams& text_params, const PairData& data,
                             std::size_t batch_size, const RgclConfig& cfg,
                             const RandomStream& stream, const StepOptions& options) {
  cfg.validate();
  const std::size_t n = data.size();
  if (data.texts.rows() != n) throw std::invalid_argument("step_bimodal: pair count mismatch");
  if (opt.anchors.size() != n)
    throw std::invalid_argument("step_bimodal: optimizer state does not cover the dataset");
  check_batch_size(n, batch_size);

  RandomStream step_stream = stream.split("step", opt.step);
  StepDiagnostics diag;
  diag.batch = sample_batch(step_stream, n, batch_size);
  const std::size_t b = batch_size;

  Matrix images(b, data.images.cols());
  Matrix texts(b, data.texts.cols());
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t idx = diag.batch.indices[k];
    std::copy(data.images.row(idx).begin(), data.images.row(idx).end(), images.row(k).begin());
    std::copy(data.texts.row(idx).begin(), data.texts.row(idx).end(), texts.row(k).begin());
  }
  const EmbeddingBatch img = encode(image_params, images);
  const EmbeddingBatch txt = encode(text_params, texts);

  std::vector<WeightedTerm> image_terms(b), text_terms(b);
  diag.g_batch.resize(2 * b);
  diag.grad_tau.resize(2 * b);
  diag.tau_before.resize(2 * b);

  parallel_for(b, [&](std::size_t k) {
    BimodalAnchorState& state = opt.anchors[diag.batch.indices[k]];
    AnchorTerm term;
    term.anchor_row = k;
    term.positive_row = k;
    for (std::size_t j = 0; j < b; ++j)
      if (j != k) term.negative_rows.push_back(j);

    WeightedTerm& ti = image_terms[k];
    ti.term = term;
    ti.h = hardness_scores(img.rows.row(k), txt.rows.row(k), txt.rows, term.negative_rows);
    WeightedTerm& tt = text_terms[k];
    tt.term = term;
    tt.h = hardness_scores(txt.rows.row(k), img.rows.row(k), img.rows, term.negative_rows);

    diag.tau_before[k] = state.image.tau;
    diag.tau_before[b + k] = state.text.tau;
    const auto [gi, gradi] = update_anchor(state.image, ti.h, n, cfg, opt.mode, options);
    const auto [gt, gradt] = update_anchor(state.text, tt.h, n, cfg, opt.mode, options);
    diag.g_batch[k] = gi;
    diag.g_batch[b + k] = gt;
    diag.grad_tau[k] = gradi;
    diag.grad_tau[b + k] = gradt;
    ti.tau = diag.tau_before[k];
    ti.s = state.image.s;
    tt.tau = diag.tau_before[b + k];
    tt.s = state.text.s;
  }, 16);

  // Anchor-side and candidate-side contributions kept apart: mirrored towers
  // then see the same summation order.
  Matrix img_as_anchor(b, image_params.embed_dim()), img_as_candidate(b, image_params.embed_dim());
  Matrix txt_as_anchor(b, text_params.embed_dim()), txt_as_candidate(b, text_params.embed_dim());
  for (std::size_t k = 0; k < b; ++k) {
    accumulate_term_gradient(image_terms[k].term, term_weights(image_terms[k], b), img.rows, txt.rows,
                             img_as_anchor, txt_as_candidate);
    accumulate_term_gradient(text_terms[k].term, term_weights(text_terms[k], b), txt.rows, img.rows,
                             txt_as_anchor, img_as_candidate);
  }
  diag.grad_w = encode_backward(image_params, images, add(img_as_anchor, img_as_candidate)).flatten();
  const Vector grad_text =
      encode_backward(text_params, texts, add(txt_as_anchor, txt_as_candidate)).flatten();
  diag.grad_w.insert(diag.grad_w.end(), grad_text.begin(), grad_text.end());

  Vector w = image_params.flatten();
  const Vector wt = text_params.flatten();
  w.insert(w.end(), wt.begin(), wt.end());
  ++opt.step;
  apply_parameter_update(opt.moments, opt.mode, opt.adam, opt.step, w, diag.grad_w, cfg);
  const auto split = static_cast<std::ptrdiff_t>(image_params.param_count());
  image_params.assign_flat(std::span<const double>(w.data(), static_cast<std::size_t>(split)));
  text_params.assign_flat(std::span<const double>(w.data() + split, w.size() - static_cast<std::size_t>(split)));
  return diag;
}

namespace {

constexpr std::string_view kOptMagic = "RGCLOPT1";

std::uint32_t mode_tag(OptimizerMode m) {
  switch (m) {
    case OptimizerMode::momentum: return 0;
    case OptimizerMode::adam: return 1;
    case OptimizerMode::fixed_tau: return 2;
  }
  return 0;
}

OptimizerMode mode_from_tag(std::uint32_t tag) {
  switch (tag) {
    case 0: return OptimizerMode::momentum;
    case 1: return OptimizerMode::adam;
    case 2: return OptimizerMode::fixed_tau;
    default: throw std::runtime_error("unknown optimizer mode tag " + std::to_string(tag));
  }
}

void write_anchor(std::ostream& os, const AnchorState& a) {
  detail::write_pod(os, a.s);
  detail::write_pod(os, a.u);
  detail::write_pod(os, a.tau);
  detail::write_pod(os, a.initialized ? 1.0 : 0.0);
}

AnchorState read_anchor(std::istream& is) {
  AnchorState a;
  a.s = detail::read_pod<double>(is);
  a.u = detail::read_pod<double>(is);
  a.tau = detail::read_pod<double>(is);
  a.initialized = detail::read_pod<double>(is) != 0.0;
  return a;
}

struct Header {
  OptimizerMode mode;
  std::uint32_t modalities;
  std::uint64_t step;
  std::uint64_t anchors;
  std::uint64_t param_len;
  AdamSettings adam;
};

void write_header(std::ostream& os, const Header& h) {
  detail::write_magic(os, kOptMagic);
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, mode_tag(h.mode));
  detail::write_pod<std::uint32_t>(os, h.modalities);
  detail::write_pod<std::uint32_t>(os, 0);
  detail::write_pod<std::uint64_t>(os, h.step);
  detail::write_pod<std::uint64_t>(os, h.anchors);
  detail::write_pod<std::uint64_t>(os, h.param_len);
  detail::write_pod(os, h.adam.beta1);
  detail::write_pod(os, h.adam.beta2);
  detail::write_pod(os, h.adam.epsilon);
}

Header read_header(std::istream& is) {
  detail::expect_magic(is, kOptMagic);
  if (detail::read_pod<std::uint32_t>(is) != 1) throw std::runtime_error("unsupported optimizer checkpoint version");
  Header h;
  h.mode = mode_from_tag(detail::read_pod<std::uint32_t>(is));
  h.modalities = detail::read_pod<std::uint32_t>(is);
  detail::read_pod<std::uint32_t>(is);
  h.step = detail::read_pod<std::uint64_t>(is);
  h.anchors = detail::read_pod<std::uint64_t>(is);
  h.param_len = detail::read_pod<std::uint64_t>(is);
  h.adam.beta1 = detail::read_pod<double>(is);
  h.adam.beta2 = detail::read_pod<double>(is);
  h.adam.epsilon = detail::read_pod<double>(is);
  return h;
}

void write_moments(std::ostream& os, const ParameterMoments& m) {
  detail::write_doubles(os, m.velocity);
  if (m.second_moment.empty()) {
    for (std::size_t k = 0; k < m.velocity.size(); ++k) detail::write_pod(os, 0.0);
  } else {
    detail::write_doubles(os, m.second_moment);
  }
}

ParameterMoments read_moments(std::istream& is, std::size_t len, OptimizerMode mode) {
  ParameterMoments m;
  m.velocity.resize(len);
  detail::read_doubles(is, m.velocity);
  Vector second(len);
  detail::read_doubles(is, second);
  if (mode == OptimizerMode::adam) m.second_moment = std::move(second);
  return m;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

}  // namespace

void save_optimizer(const OptimizerState& opt, const std::filesystem::path& path) {
  auto os = open_out(path);
  write_header(os, {opt.mode, 1, opt.step, opt.anchors.size(), opt.moments.velocity.size(), opt.adam});
  write_moments(os, opt.moments);
  for (const AnchorState& a : opt.anchors) write_anchor(os, a);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void save_optimizer(const BimodalOptimizerState& opt, const std::filesystem::path& path) {
  auto os = open_out(path);
  write_header(os, {opt.mode, 2, opt.step, opt.anchors.size(), opt.moments.velocity.size(), opt.adam});
  write_moments(os, opt.moments);
  for (const BimodalAnchorState& a : opt.anchors) {
    write_anchor(os, a.image);
    write_anchor(os, a.text);
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

OptimizerState load_optimizer(const std::filesystem::path& path) {
  auto is = open_in(path);
  const Header h = read_header(is);
  if (h.modalities != 1) throw std::runtime_error("checkpoint holds a bimodal optimizer state");
  OptimizerState opt;
  opt.mode = h.mode;
  opt.adam = h.adam;
  opt.step = h.step;
  opt.moments = read_moments(is, h.param_len, h.mode);
  opt.anchors.resize(h.anchors);
  for (AnchorState& a : opt.anchors) a = read_anchor(is);
  return opt;
}

BimodalOptimizerState load_bimodal_optimizer(const std::filesystem::path& path) {
  auto is = open_in(path);
  const Header h = read_header(is);
  if (h.modalities != 2) throw std::runtime_error("checkpoint holds a unimodal optimizer state");
  BimodalOptimizerState opt;
  opt.mode = h.mode;
  opt.adam = h.adam;
  opt.step = h.step;
  opt.moments = read_moments(is, h.param_len, h.mode);
  opt.anchors.resize(h.anchors);
  for (BimodalAnchorState& a : opt.anchors) {
    a.image = read_anchor(is);
    a.text = read_anchor(is);
  }
  return opt;
}

}  // namespace rgcl
