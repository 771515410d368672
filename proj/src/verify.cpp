#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>

#include "rgcl/dro_oracle.hpp"
#include "rgcl/harness.hpp"

namespace rgcl {

namespace {

using nlohmann::json;

double rel_err(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double diff = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    ref += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

std::string fmt(const char* pattern, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

struct Instance {
  EncoderParams params;
  ViewPairs data;
  Vector tau;
  RgclConfig cfg;
};

Instance random_instance(RandomStream rs, std::size_t n, std::size_t d_in, std::size_t hidden, std::size_t embed) {
  Instance inst;
  inst.cfg.rho = 0.1 + 0.9 * rs.uniform();
  inst.cfg.tau0 = 0.05;
  inst.cfg.tau_init = 0.5;
  inst.params = init_encoder(d_in, hidden, embed, rs.uniform() < 0.5 ? Activation::tanh : Activation::identity, rs.split("init"));
  inst.data = {Matrix(n, d_in), Matrix(n, d_in)};
  for (double& v : inst.data.anchor_views.values()) v = rs.gaussian();
  for (double& v : inst.data.positive_views.values()) v = rs.gaussian();
  inst.tau.resize(n);
  for (double& t : inst.tau) t = 0.2 + 0.8 * rs.uniform();
  return inst;
}

Vector random_h(RandomStream& rs, std::size_t m) {
  Vector h(m);
  for (double& v : h) v = -2.0 + 4.0 * rs.uniform();
  return h;
}

using Check = std::function<CheckResult()>;

CheckResult grad_tau_finite_diff(std::uint64_t seed) {
  CheckResult r{"grad_tau_matches_finite_diff", true, 0.0, 1e-6, ""};
  RandomStream rs = RandomStream(seed).split("verify_grad_tau");
  for (int t = 0; t < 10; ++t) {
    Instance inst = random_instance(rs.split(static_cast<std::uint64_t>(t)), 4 + t % 4, 3 + t % 3, 4, 2 + t % 4);
    const FullGradient fg = full_gradient_unimodal(inst.params, inst.data, inst.tau, inst.cfg);
    const Vector fd = oracle::finite_diff_grad(
        [&](std::span<const double> tau) { return objective_unimodal(inst.params, inst.data, tau, inst.cfg); },
        inst.tau, 1e-5);
    r.residual = std::max(r.residual, rel_err(fg.grad_tau, fd));
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult grad_w_finite_diff(std::uint64_t seed) {
  CheckResult r{"grad_w_matches_finite_diff", true, 0.0, 1e-6, ""};
  RandomStream rs = RandomStream(seed).split("verify_grad_w");
  for (int t = 0; t < 10; ++t) {
    Instance inst = random_instance(rs.split(static_cast<std::uint64_t>(t)), 4 + t % 4, 3 + t % 3, 4, 2 + t % 4);
    const FullGradient fg = full_gradient_unimodal(inst.params, inst.data, inst.tau, inst.cfg);
    EncoderParams probe = inst.params;
    const Vector fd = oracle::finite_diff_grad(
        [&](std::span<const double> w) {
          probe.assign_flat(w);
          return objective_unimodal(probe, inst.data, inst.tau, inst.cfg);
        },
        inst.params.flatten(), 1e-6);
    r.residual = std::max(r.residual, rel_err(fg.grad_w, fd));
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult reference_matches_production(std::uint64_t seed) {
  CheckResult r{"reference_matches_production", true, 0.0, 1e-10, ""};
  RandomStream rs = RandomStream(seed).split("verify_reference");
  for (int t = 0; t < 5; ++t) {
    Instance inst = random_instance(rs.split(static_cast<std::uint64_t>(t)), 6 + t, 5, 6, 4);
    const FullGradient fg = full_gradient_unimodal(inst.params, inst.data, inst.tau, inst.cfg);
    const oracle::ReferenceGradient ref = oracle::full_batch_reference(inst.params, inst.data, inst.tau, inst.cfg);
    r.residual = std::max({r.residual, std::abs(fg.value - ref.value), rel_err(fg.grad_w, ref.grad_w),
                           rel_err(fg.grad_tau, ref.grad_tau)});
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult primal_dual_equivalence(std::uint64_t seed) {
  CheckResult r{"primal_dual_equivalence", true, 0.0, 1e-6, ""};
  RandomStream rs = RandomStream(seed).split("verify_duality");
  for (std::size_t m = 2; m <= 6; ++m) {
    for (double rho : {0.1, 0.5, 1.0}) {
      for (int t = 0; t < 4; ++t) {
        const Vector h = random_h(rs, m);
        const double tau0 = 0.05;
        const auto primal = oracle::solve_primal(h, rho, tau0);
        const auto dual = oracle::solve_dual_tau(h, tau0, rho);
        r.residual = std::max(r.residual, std::abs(primal.objective - dual.value));
      }
    }
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult grid_oracle_agreement(std::uint64_t seed) {
  CheckResult r{"grid_oracle_agreement", true, 0.0, 1e-3, ""};
  RandomStream rs = RandomStream(seed).split("verify_grid");
  for (std::size_t m = 2; m <= 3; ++m) {
    for (double rho : {0.1, 0.5, 1.0}) {
      const Vector h = random_h(rs, m);
      const auto primal = oracle::solve_primal(h, rho, 0.05);
      const auto grid = oracle::grid_search_simplex(h, rho, 0.05, m == 2 ? 1e-4 : 2e-3);
      r.residual = std::max(r.residual, std::abs(primal.objective - grid.value));
    }
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult two_negative_weights(std::uint64_t) {
  CheckResult r{"worked_example_weights", true, 0.0, 0.02, ""};
  const Vector h{0.0, -1.0};
  const auto sol = oracle::solve_primal(h, 0.2, 0.0);
  r.residual = std::abs(sol.p[0] - 0.8);
  r.detail = fmt("p1 = %.6f", sol.p[0]);
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult weight_monotone_in_rho(std::uint64_t seed) {
  CheckResult r{"max_weight_monotone_in_rho", true, 0.0, 1e-9, ""};
  RandomStream rs = RandomStream(seed).split("verify_monotone");
  const double rhos[] = {0.05, 0.1, 0.2, 0.4, 0.8};
  for (int t = 0; t < 20; ++t) {
    const Vector h = random_h(rs, 2 + static_cast<std::size_t>(t % 5));
    double prev = 0.0;
    for (double rho : rhos) {
      const auto sol = oracle::solve_primal(h, rho, 0.05);
      const double top = *std::max_element(sol.p.begin(), sol.p.end());
      r.residual = std::max(r.residual, prev - top);
      prev = top;
    }
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult dual_tau_bound(std::uint64_t seed) {
  CheckResult r{"dual_tau_within_bound", true, 0.0, 0.0, ""};
  RandomStream rs = RandomStream(seed).split("verify_tau_bound");
  for (int t = 0; t < 60; ++t) {
    const double rho = 0.05 + 2.0 * rs.uniform();
    const Vector h = random_h(rs, 2 + static_cast<std::size_t>(t % 7));
    const auto sol = oracle::solve_dual_tau(h, 0.05, rho);
    r.residual = std::max(r.residual, sol.tau - (0.05 + 2.0 / rho));
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult multiplier_bound(std::uint64_t seed) {
  CheckResult r{"multiplier_within_bound", true, 0.0, 0.0, ""};
  RandomStream rs = RandomStream(seed).split("verify_lambda");
  for (int t = 0; t < 60; ++t) {
    const double rho = 0.05 + 2.0 * rs.uniform();
    const Vector h = random_h(rs, 2 + static_cast<std::size_t>(t % 7));
    const auto sol = oracle::solve_primal(h, rho, 0.05);
    r.residual = std::max(r.residual, sol.lambda - 2.0 / rho);
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult closed_form_weights(std::uint64_t seed) {
  CheckResult r{"closed_form_weights_match_oracle", true, 0.0, 1e-6, ""};
  RandomStream rs = RandomStream(seed).split("verify_pstar");
  for (int t = 0; t < 30; ++t) {
    const Vector h = random_h(rs, 2 + static_cast<std::size_t>(t % 5));
    const double rho = 0.1 + rs.uniform();
    const auto dual = oracle::solve_dual_tau(h, 0.05, rho);
    const auto primal = oracle::solve_primal(h, rho, 0.05);
    const DistributionalWeights p = p_star(HardnessVector{h, 0, 2.0}, dual.tau);
    for (std::size_t j = 0; j < h.size(); ++j) r.residual = std::max(r.residual, std::abs(p.p[j] - primal.p[j]));
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult fixed_tau_identity(std::uint64_t seed) {
  CheckResult r{"fixed_tau_reduces_to_gcl", true, 0.0, 1e-12, ""};
  RandomStream rs = RandomStream(seed).split("verify_gcl");
  RgclConfig cfg;
  for (int t = 0; t < 50; ++t) {
    const Vector h = random_h(rs, 2 + static_cast<std::size_t>(t % 9));
    const double tau = cfg.tau0 + (cfg.tau_max() - cfg.tau0) * rs.uniform();
    double sum = 0.0;
    for (double v : h) sum += std::exp(v / tau);
    const double gcl = tau * std::log(sum);
    const double expected = gcl - tau * std::log(static_cast<double>(h.size())) + (tau - cfg.tau0) * cfg.rho;
    r.residual = std::max(r.residual, std::abs(dual_loss_anchor(HardnessVector{h, 0, 2.0}, tau, cfg) - expected));
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

synth::SynthDataset small_longtail(std::uint64_t seed, std::size_t n) {
  synth::LongTailParams p;
  p.clusters = 4;
  p.samples = n;
  p.imbalance_ratio = 4.0;
  p.input_dim = 6;
  p.seed = seed;
  return synth::gen_longtail_clusters(p);
}

CheckResult trained_tau_bound(std::uint64_t seed, bool disable_projection) {
  CheckResult r{"trained_tau_within_bound", true, 0.0, 0.0, ""};
  const synth::SynthDataset ds = small_longtail(seed, 64);
  RgclConfig cfg;
  cfg.rho = 1.0;
  cfg.tau_init = 1.0;
  cfg.eta_tau = 20.0;  // large enough that unprojected steps leave the box
  const RandomStream root(seed);
  EncoderParams params = init_encoder(6, 8, 4, Activation::tanh, root.split("verify_model"));
  OptimizerState opt = OptimizerState::create(ds.size(), params.param_count(), cfg);
  StepOptions so;
  so.disable_tau_projection = disable_projection;
  try {
    for (int step = 0; step < 60; ++step) {
      step_unimodal(opt, params, {ds.inputs, 0.1}, 16, cfg, root.split("verify_train"), so);
      for (const AnchorState& a : opt.anchors) {
        const double excess = std::max(cfg.tau0 - a.tau, a.tau - cfg.tau_max());
        if (!(excess <= 0.0)) {
          r.residual = std::isfinite(excess) ? excess : std::numeric_limits<double>::infinity();
          r.detail = "tau " + fmt("%.6g", a.tau) + " left the box at step " + std::to_string(step);
          r.passed = false;
          return r;
        }
      }
    }
  } catch (const std::exception& e) {
    r.passed = false;
    r.residual = std::numeric_limits<double>::infinity();
    r.detail = e.what();
    return r;
  }
  return r;
}

CheckResult g_lower_bound(std::uint64_t seed) {
  // g >= exp(-C / tau_i) for the anchor's own temperature; see README on the tau_max form.
  CheckResult r{"g_above_per_anchor_floor", true, 0.0, 1e-12, ""};
  const synth::SynthDataset ds = small_longtail(seed, 64);
  RgclConfig cfg;
  const RandomStream root(seed);
  EncoderParams params = init_encoder(6, 8, 4, Activation::tanh, root.split("verify_model"));
  OptimizerState opt = OptimizerState::create(ds.size(), params.param_count(), cfg);
  double worst = -std::numeric_limits<double>::infinity();
  for (int step = 0; step < 60; ++step) {
    const StepDiagnostics d = step_unimodal(opt, params, {ds.inputs, 0.1}, 16, cfg, root.split("verify_train"));
    for (std::size_t k = 0; k < d.g_batch.size(); ++k) {
      const double floor = std::exp(-RgclConfig::hardness_bound / d.tau_before[k]);
      worst = std::max(worst, floor - d.g_batch[k]);
    }
  }
  r.residual = std::max(worst, 0.0);
  r.passed = worst <= r.tolerance;
  return r;
}

CheckResult estimator_unbiased(std::uint64_t seed) {
  CheckResult r{"batch_estimator_unbiased", true, 0.0, 3.0, "residual in standard errors"};
  RandomStream rs = RandomStream(seed).split("verify_unbiased");
  const std::size_t n = 30, b = 6, draws = 4000;
  Instance inst = random_instance(rs.split("instance"), n, 5, 6, 4);
  const Matrix pool = encode(inst.params, stack_views(inst.data)).rows;
  for (std::size_t i = 0; i < 5; ++i) {
    const AnchorTerm full = unimodal_term(i, n);
    const HardnessVector h_full = hardness_scores(pool.row(i), pool.row(n + i), pool, full.negative_rows);
    const double g_full = g_value(h_full, inst.tau[i]);
    double mean = 0.0, m2 = 0.0;
    RandomStream draw = rs.split("draws", i);
    for (std::size_t t = 0; t < draws; ++t) {
      const Batch others = sample_batch(draw, n - 1, b - 1);
      std::vector<std::size_t> rows;
      for (std::size_t j : others.indices) {
        const std::size_t idx = j < i ? j : j + 1;
        rows.push_back(idx);
        rows.push_back(n + idx);
      }
      const double g = g_value(hardness_scores(pool.row(i), pool.row(n + i), pool, rows), inst.tau[i]);
      const double delta = g - mean;
      mean += delta / static_cast<double>(t + 1);
      m2 += delta * (g - mean);
    }
    const double se = std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws));
    r.residual = std::max(r.residual, std::abs(mean - g_full) / se);
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult exact_degeneration(std::uint64_t seed) {
  CheckResult r{"full_batch_degenerates_to_exact", true, 0.0, 1e-10, ""};
  const synth::SynthDataset ds = small_longtail(seed, 8);
  RgclConfig cfg;
  cfg.beta0 = 1.0;
  cfg.beta1 = 1.0;
  cfg.tau_grad_scale = 1.0;
  cfg.eta_w = 0.05;
  const RandomStream root(seed);
  EncoderParams params = init_encoder(6, 8, 4, Activation::tanh, root.split("verify_model"));
  OptimizerState opt = OptimizerState::create(ds.size(), params.param_count(), cfg);
  StepOptions so;
  so.keep_views = true;
  for (int step = 0; step < 10; ++step) {
    const EncoderParams before = params;
    const StepDiagnostics d = step_unimodal(opt, params, {ds.inputs, 0.1}, ds.size(), cfg, root.split("verify_train"), so);
    const oracle::ReferenceGradient ref = oracle::full_batch_reference(before, d.views, d.tau_before, cfg);
    r.residual = std::max({r.residual, rel_err(d.grad_w, ref.grad_w), rel_err(d.grad_tau, ref.grad_tau)});
  }
  r.passed = r.residual <= r.tolerance;
  return r;
}

CheckResult baseline_matches_frozen_tau(std::uint64_t seed) {
  CheckResult r{"frozen_tau_matches_baseline", true, 0.0, 0.0, "bitwise"};
  const synth::SynthDataset ds = small_longtail(seed, 48);
  RgclConfig cfg;
  cfg.eta_tau = 0.0;
  const RandomStream root(seed);
  EncoderParams pa = init_encoder(6, 8, 4, Activation::tanh, root.split("verify_model"));
  EncoderParams pb = pa;
  OptimizerState a = OptimizerState::create(ds.size(), pa.param_count(), cfg);
  OptimizerState b = OptimizerState::create(ds.size(), pb.param_count(), cfg, OptimizerMode::fixed_tau);
  for (int step = 0; step < 15; ++step) {
    step_unimodal(a, pa, {ds.inputs, 0.1}, 12, cfg, root.split("verify_train"));
    step_sogclr_baseline(b, pb, {ds.inputs, 0.1}, 12, cfg, root.split("verify_train"));
    if (!(pa == pb) || a.anchors != b.anchors || a.moments.velocity != b.moments.velocity) {
      r.passed = false;
      r.residual = 1.0;
      r.detail = "trajectories diverge at step " + std::to_string(step);
      return r;
    }
  }
  return r;
}

CheckResult bimodal_mirror(std::uint64_t seed) {
  CheckResult r{"bimodal_mirror_symmetry", true, 0.0, 0.0, "bitwise"};
  synth::BimodalParams bp;
  bp.clusters = 4;
  bp.samples = 40;
  bp.imbalance_ratio = 4.0;
  bp.latent_dim = 4;
  bp.image_dim = 6;
  bp.text_dim = 6;
  bp.seed = seed;
  bp.mirrored = true;
  const synth::BimodalSynthDataset ds = synth::gen_bimodal_pairs(bp);
  RgclConfig cfg;
  const RandomStream root(seed);
  EncoderParams img = init_encoder(6, 8, 4, Activation::tanh, root.split("verify_tower"));
  EncoderParams txt = img;
  BimodalOptimizerState opt = BimodalOptimizerState::create(ds.size(), 2 * img.param_count(), cfg);
  for (int step = 0; step < 20; ++step) {
    step_bimodal(opt, img, txt, ds.pairs, 8, cfg, root.split("verify_train"));
    for (const BimodalAnchorState& a : opt.anchors) {
      if (a.image.tau != a.text.tau || a.image.s != a.text.s) {
        r.passed = false;
        r.residual = std::abs(a.image.tau - a.text.tau);
        r.detail = "image/text temperatures differ at step " + std::to_string(step);
        return r;
      }
    }
  }
  return r;
}

CheckResult checkpoint_resume(std::uint64_t seed) {
  CheckResult r{"checkpoint_resume_bitwise", true, 0.0, 0.0, "bitwise"};
  const synth::SynthDataset ds = small_longtail(seed, 48);
  RgclConfig cfg;
  const RandomStream root(seed);
  const RandomStream train = root.split("verify_train");
  EncoderParams params = init_encoder(6, 8, 4, Activation::tanh, root.split("verify_model"));
  OptimizerState opt = OptimizerState::create(ds.size(), params.param_count(), cfg, OptimizerMode::adam);
  for (int s = 0; s < 5; ++s) step_unimodal(opt, params, {ds.inputs, 0.1}, 12, cfg, train);

  const auto dir = std::filesystem::temp_directory_path() / ("rgcl_verify_" + std::to_string(seed));
  std::filesystem::create_directories(dir);
  save_encoder(params, dir / "encoder.bin");
  save_optimizer(opt, dir / "optimizer.bin");
  EncoderParams p2 = load_encoder(dir / "encoder.bin");
  OptimizerState o2 = load_optimizer(dir / "optimizer.bin");
  std::filesystem::remove_all(dir);

  for (int s = 0; s < 5; ++s) {
    step_unimodal(opt, params, {ds.inputs, 0.1}, 12, cfg, train);
    step_unimodal(o2, p2, {ds.inputs, 0.1}, 12, cfg, train);
  }
  if (!(params == p2) || !(opt == o2)) {
    r.passed = false;
    r.residual = 1.0;
    r.detail = "resumed run differs from the uninterrupted one";
  }
  return r;
}

CheckResult tau_csv_roundtrip(std::uint64_t seed) {
  CheckResult r{"tau_csv_roundtrip", true, 0.0, 0.0, "bitwise"};
  RandomStream rs = RandomStream(seed).split("verify_csv");
  std::vector<AnchorState> anchors(25);
  std::vector<std::size_t> labels(25);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    anchors[i].tau = 0.05 + rs.uniform();
    anchors[i].s = std::exp(-3.0 * rs.uniform());
    labels[i] = i % 3;
  }
  const auto path = std::filesystem::temp_directory_path() / ("rgcl_verify_tau_" + std::to_string(seed) + ".csv");
  export_tau_csv(anchors, labels, path);
  const std::vector<TauRow> rows = read_tau_csv(path);
  std::filesystem::remove(path);
  if (rows.size() != anchors.size()) {
    r.passed = false;
    r.detail = "row count mismatch";
    return r;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].index != i || rows[i].label != labels[i] || rows[i].tau != anchors[i].tau || rows[i].s != anchors[i].s) {
      r.passed = false;
      r.residual = std::max(std::abs(rows[i].tau - anchors[i].tau), std::abs(rows[i].s - anchors[i].s));
      r.detail = "row " + std::to_string(i) + " differs";
      return r;
    }
  }
  return r;
}

}  // namespace

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

json VerifyReport::to_json() const {
  json list = json::array();
  std::size_t failed = 0;
  for (const CheckResult& c : checks) {
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"residual", std::isfinite(c.residual) ? json(c.residual) : json("inf")},
                    {"tolerance", c.tolerance},
                    {"detail", c.detail}});
    if (!c.passed) ++failed;
  }
  return {{"checks", list}, {"check_count", checks.size()}, {"failed", failed}, {"all_passed", failed == 0}};
}

VerifyReport run_verify(const VerifyOptions& options) {
  const std::uint64_t seed = options.seed;
  const std::vector<std::pair<const char*, Check>> suite = {
      {"grad_tau_matches_finite_diff", [&] { return grad_tau_finite_diff(seed); }},
      {"grad_w_matches_finite_diff", [&] { return grad_w_finite_diff(seed); }},
      {"reference_matches_production", [&] { return reference_matches_production(seed); }},
      {"primal_dual_equivalence", [&] { return primal_dual_equivalence(seed); }},
      {"grid_oracle_agreement", [&] { return grid_oracle_agreement(seed); }},
      {"worked_example_weights", [&] { return two_negative_weights(seed); }},
      {"max_weight_monotone_in_rho", [&] { return weight_monotone_in_rho(seed); }},
      {"dual_tau_within_bound", [&] { return dual_tau_bound(seed); }},
      {"multiplier_within_bound", [&] { return multiplier_bound(seed); }},
      {"closed_form_weights_match_oracle", [&] { return closed_form_weights(seed); }},
      {"fixed_tau_reduces_to_gcl", [&] { return fixed_tau_identity(seed); }},
      {"trained_tau_within_bound", [&] { return trained_tau_bound(seed, options.disable_tau_projection); }},
      {"g_above_per_anchor_floor", [&] { return g_lower_bound(seed); }},
      {"batch_estimator_unbiased", [&] { return estimator_unbiased(seed); }},
      {"full_batch_degenerates_to_exact", [&] { return exact_degeneration(seed); }},
      {"frozen_tau_matches_baseline", [&] { return baseline_matches_frozen_tau(seed); }},
      {"bimodal_mirror_symmetry", [&] { return bimodal_mirror(seed); }},
      {"checkpoint_resume_bitwise", [&] { return checkpoint_resume(seed); }},
      {"tau_csv_roundtrip", [&] { return tau_csv_roundtrip(seed); }},
  };
  VerifyReport rep;
  for (const auto& [name, check] : suite) {
    try {
      rep.checks.push_back(check());
    } catch (const std::exception& e) {
      rep.checks.push_back({name, false, std::numeric_limits<double>::infinity(), 0.0, e.what()});
    }
  }
  return rep;
}

}  // namespace rgcl
