#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "rgcl/datasynth.hpp"
#include "rgcl/dro_oracle.hpp"
#include "rgcl/isogclr.hpp"
#include "test_support.hpp"

using namespace rgcl;

namespace {

struct Fixture {
  Matrix inputs;
  EncoderParams params;
  RgclConfig cfg;
  OptimizerState opt;

  Fixture(std::uint64_t seed, std::size_t n, OptimizerMode mode = OptimizerMode::momentum) {
    RandomStream rs(seed);
    inputs = test::gaussian_matrix(rs, n, 4);
    params = init_encoder(4, 6, 3, Activation::tanh, rs.split("enc"));
    opt = OptimizerState::create(n, params.param_count(), cfg, mode);
  }
};

HardnessVector hv(Vector v) {
  HardnessVector h;
  h.values = std::move(v);
  return h;
}

}  // namespace

TEST_CASE("s starts at the first g and then tracks a moving average") {
  AnchorState a;
  CHECK(update_s(a, 0.4, 0.9) == 0.4);
  CHECK(a.initialized);
  CHECK(update_s(a, 1.4, 0.9) == doctest::Approx(0.1 * 0.4 + 0.9 * 1.4));
  AnchorState b;
  update_s(b, 2.0, 0.5);
  update_s(b, 4.0, 1.0);
  CHECK(b.s == 4.0);
}

TEST_CASE("temperature gradient estimator") {
  AnchorState a;
  a.tau = 0.5;
  CHECK_THROWS_AS(grad_tau_estimator(a, hv({0.0}), 0.3, 10, 10.0), std::logic_error);
  const HardnessVector h = hv({0.0, -1.0, 0.5});
  update_s(a, g_value(h, a.tau), 1.0);
  // with s equal to the full g this is scale times the exact gradient
  CHECK(grad_tau_estimator(a, h, 0.3, 10, 10.0) == doctest::Approx(10.0 * exact_grad_tau(h, 0.5, 0.3, 10)).epsilon(1e-14));
  a.s = 0.0;
  CHECK_THROWS_AS(grad_tau_estimator(a, h, 0.3, 10, 10.0), std::logic_error);
}

TEST_CASE("sample_batch draws distinct in-range indices deterministically") {
  RandomStream rs(51);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rs.uniform_below(40);
    const std::size_t b = 2 + rs.uniform_below(n - 1);
    RandomStream s1(1000 + t), s2(1000 + t);
    const Batch a = sample_batch(s1, n, b);
    const Batch c = sample_batch(s2, n, b);
    CHECK(a.indices == c.indices);
    CHECK(a.view_seeds == c.view_seeds);
    const std::set<std::size_t> uniq(a.indices.begin(), a.indices.end());
    CHECK(uniq.size() == b);
    CHECK(*uniq.rbegin() < n);
  }
  RandomStream s(1);
  CHECK_THROWS_AS(sample_batch(s, 5, 6), std::invalid_argument);
  CHECK_THROWS_AS(sample_batch(s, 5, 1), std::invalid_argument);
}

TEST_CASE("sample_batch is roughly uniform over indices") {
  RandomStream rs(52);
  std::vector<int> hits(10, 0);
  for (int t = 0; t < 20000; ++t)
    for (std::size_t i : sample_batch(rs, 10, 3).indices) ++hits[i];
  for (int h : hits) CHECK(std::abs(h - 6000) < 400);
}

TEST_CASE("project_tau clamps to the feasible interval") {
  RgclConfig cfg;
  CHECK(project_tau(-1.0, cfg) == cfg.tau0);
  CHECK(project_tau(100.0, cfg) == cfg.tau_max());
  CHECK(project_tau(0.3, cfg) == 0.3);
}

TEST_CASE("batch_views reproduces augmentation from the stored seeds") {
  RandomStream rs(53);
  const Matrix x = test::gaussian_matrix(rs, 8, 3);
  const Batch b = sample_batch(rs, 8, 4);
  const ViewPairs v1 = batch_views(x, b, 0.2);
  const ViewPairs v2 = batch_views(x, b, 0.2);
  CHECK(v1.anchor_views == v2.anchor_views);
  CHECK(v1.positive_views == v2.positive_views);
  CHECK(v1.anchor_views != v1.positive_views);
  const ViewPairs clean = batch_views(x, b, 0.0);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 3; ++c) CHECK(clean.anchor_views(k, c) == x(b.indices[k], c));
}

TEST_CASE("temperatures stay inside the projection box under aggressive steps") {
  RandomStream rs(54);
  for (int t = 0; t < 20; ++t) {
    Fixture f(60 + t, 12);
    f.cfg.rho = 0.05 + rs.uniform();
    f.cfg.tau_init = f.cfg.tau0 + (f.cfg.tau_max() - f.cfg.tau0) * rs.uniform();
    f.cfg.eta_tau = 50.0 * rs.uniform();
    f.cfg.beta1 = 0.2 + 0.8 * rs.uniform();
    f.opt = OptimizerState::create(12, f.params.param_count(), f.cfg);
    const RandomStream stream(t);
    for (int k = 0; k < 15; ++k) {
      step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 4, f.cfg, stream);
      for (const AnchorState& a : f.opt.anchors) {
        CHECK(a.tau >= f.cfg.tau0);
        CHECK(a.tau <= f.cfg.tau_max());
      }
    }
  }
}

TEST_CASE("disabling the projection lets temperatures escape") {
  Fixture f(70, 16);
  f.cfg.rho = 1.0;
  f.cfg.tau_init = 1.0;
  f.cfg.eta_tau = 20.0;
  f.opt = OptimizerState::create(16, f.params.param_count(), f.cfg);
  StepOptions bad;
  bad.disable_tau_projection = true;
  bool escaped = false;
  for (int k = 0; k < 10 && !escaped; ++k) {
    step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 8, f.cfg, RandomStream(3), bad);
    for (const AnchorState& a : f.opt.anchors) escaped = escaped || a.tau < f.cfg.tau0 || a.tau > f.cfg.tau_max();
  }
  CHECK(escaped);
}

TEST_CASE("a run is a pure function of seed and step") {
  Fixture a(80, 20), b(80, 20);
  const RandomStream stream(9);
  for (int k = 0; k < 5; ++k) {
    step_unimodal(a.opt, a.params, {a.inputs, 0.1}, 6, a.cfg, stream);
    step_unimodal(b.opt, b.params, {b.inputs, 0.1}, 6, b.cfg, stream);
  }
  CHECK(a.opt == b.opt);
  CHECK(a.params == b.params);
  CHECK(a.opt.step == 5);

  Fixture c(80, 20);
  step_unimodal(c.opt, c.params, {c.inputs, 0.1}, 6, c.cfg, RandomStream(10));
  Fixture d(80, 20);
  step_unimodal(d.opt, d.params, {d.inputs, 0.1}, 6, d.cfg, stream);
  CHECK(c.params != d.params);
}

TEST_CASE("full batch with beta0 = 1 reproduces the exact gradients") {
  for (int t = 0; t < 5; ++t) {
    Fixture f(90 + t, 6);
    f.cfg.beta0 = 1.0;
    f.cfg.tau_grad_scale = 1.0;
    for (AnchorState& a : f.opt.anchors) a.tau = 0.2 + 0.3 * t;
    const EncoderParams before = f.params;
    StepOptions keep;
    keep.keep_views = true;
    const StepDiagnostics d = step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 6, f.cfg, RandomStream(t), keep);
    const FullGradient fg = full_gradient_unimodal(before, d.views, d.tau_before, f.cfg);
    CHECK(test::rel_err(d.grad_w, fg.grad_w) <= 1e-12);
    CHECK(test::rel_err(d.grad_tau, fg.grad_tau) <= 1e-12);
  }
}

TEST_CASE("first momentum step moves w by eta beta1 G(w)") {
  Fixture f(100, 10);
  const Vector w0 = f.params.flatten();
  const StepDiagnostics d = step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 5, f.cfg, RandomStream(1));
  const Vector w1 = f.params.flatten();
  for (std::size_t k = 0; k < w0.size(); ++k)
    CHECK(w1[k] == doctest::Approx(w0[k] - f.cfg.eta_w * f.cfg.beta1 * d.grad_w[k]).epsilon(1e-12));
}

TEST_CASE("first Adam step moves each live coordinate by about eta") {
  Fixture f(101, 10, OptimizerMode::adam);
  f.cfg.eta_w = 1e-3;
  const Vector w0 = f.params.flatten();
  const StepDiagnostics d = step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 5, f.cfg, RandomStream(1));
  const Vector w1 = f.params.flatten();
  for (std::size_t k = 0; k < w0.size(); ++k) {
    if (std::abs(d.grad_w[k]) < 1e-6) continue;
    const double expected = -f.cfg.eta_w * (d.grad_w[k] > 0 ? 1.0 : -1.0);
    CHECK(w1[k] - w0[k] == doctest::Approx(expected).epsilon(1e-3));
  }
  CHECK(f.opt.moments.second_moment.size() == w0.size());
}

TEST_CASE("fixed temperature mode and the baseline step leave tau alone") {
  Fixture f(102, 10, OptimizerMode::fixed_tau);
  for (int k = 0; k < 5; ++k) step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 4, f.cfg, RandomStream(2));
  for (const AnchorState& a : f.opt.anchors) CHECK(a.tau == f.cfg.tau_init);

  Fixture g(102, 10);
  for (int k = 0; k < 5; ++k) step_sogclr_baseline(g.opt, g.params, {g.inputs, 0.1}, 4, g.cfg, RandomStream(2));
  CHECK(g.opt.mode == OptimizerMode::momentum);
  CHECK(g.params == f.params);
  for (std::size_t i = 0; i < 10; ++i) CHECK(g.opt.anchors[i].s == f.opt.anchors[i].s);

  g.opt.anchors[3].tau = 0.5;
  CHECK_THROWS_AS(step_sogclr_baseline(g.opt, g.params, {g.inputs, 0.1}, 4, g.cfg, RandomStream(2)),
                  std::logic_error);
}

TEST_CASE("symmetrized full-batch step is the gradient of the joint objective") {
  Fixture f(103, 5);
  f.cfg.beta0 = 1.0;
  f.cfg.symmetrize = true;
  for (AnchorState& a : f.opt.anchors) a.tau = 0.4;
  const EncoderParams before = f.params;
  StepOptions keep;
  keep.keep_views = true;
  const StepDiagnostics d = step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 5, f.cfg, RandomStream(4), keep);
  const Matrix stacked = stack_views(d.views);
  const std::size_t n = 5;

  // (1/n) sum_i tau log mean over both directions' hardness values
  auto objective = [&](std::span<const double> w) {
    EncoderParams p = before;
    p.assign_flat(w);
    const Matrix e = encode(p, stacked).rows;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      int count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        for (std::size_t r : {j, n + j}) {
          acc += std::exp((dot(e.row(i), e.row(r)) - dot(e.row(i), e.row(n + i))) / 0.4);
          acc += std::exp((dot(e.row(n + i), e.row(r)) - dot(e.row(n + i), e.row(i))) / 0.4);
          count += 2;
        }
      }
      total += 0.4 * std::log(acc / count);
    }
    return total / static_cast<double>(n);
  };
  const Vector fd = oracle::finite_diff_grad(objective, before.flatten(), 1e-5);
  CHECK(test::rel_err(d.grad_w, fd) <= 1e-6);
}

TEST_CASE("mirrored bimodal towers keep identical temperatures") {
  RandomStream rs(104);
  const Matrix x = test::gaussian_matrix(rs, 16, 4);
  const PairData data{x, x};
  EncoderParams img = init_encoder(4, 5, 3, Activation::tanh, rs);
  EncoderParams txt = img;
  RgclConfig cfg;
  BimodalOptimizerState opt = BimodalOptimizerState::create(16, 2 * img.param_count(), cfg);
  for (int k = 0; k < 10; ++k) {
    const StepDiagnostics d = step_bimodal(opt, img, txt, data, 6, cfg, RandomStream(5));
    for (std::size_t j = 0; j < 6; ++j) CHECK(d.grad_tau[j] == d.grad_tau[6 + j]);
    for (const BimodalAnchorState& a : opt.anchors) {
      CHECK(a.image.tau == a.text.tau);
      CHECK(a.image.s == a.text.s);
    }
    CHECK(img == txt);
  }
}

TEST_CASE("bimodal full batch reproduces the exact gradients") {
  RandomStream rs(105);
  const std::size_t n = 5;
  const PairData data{test::gaussian_matrix(rs, n, 3), test::gaussian_matrix(rs, n, 4)};
  EncoderParams img = init_encoder(3, 4, 2, Activation::tanh, rs.split("i"));
  EncoderParams txt = init_encoder(4, 4, 2, Activation::tanh, rs.split("t"));
  RgclConfig cfg;
  cfg.beta0 = 1.0;
  cfg.tau_grad_scale = 1.0;
  BimodalOptimizerState opt = BimodalOptimizerState::create(n, img.param_count() + txt.param_count(), cfg);
  const EncoderParams img0 = img, txt0 = txt;
  const StepDiagnostics d = step_bimodal(opt, img, txt, data, n, cfg, RandomStream(6));

  PairData permuted{Matrix(n, 3), Matrix(n, 4)};
  for (std::size_t k = 0; k < n; ++k) {
    std::copy(data.images.row(d.batch.indices[k]).begin(), data.images.row(d.batch.indices[k]).end(),
              permuted.images.row(k).begin());
    std::copy(data.texts.row(d.batch.indices[k]).begin(), data.texts.row(d.batch.indices[k]).end(),
              permuted.texts.row(k).begin());
  }
  const Vector tau(n, cfg.tau_init);
  const FullGradient fg = full_gradient_bimodal(img0, txt0, permuted, tau, tau, cfg);
  CHECK(test::rel_err(d.grad_w, fg.grad_w) <= 1e-12);
  CHECK(test::rel_err(d.grad_tau, fg.grad_tau) <= 1e-12);
}

TEST_CASE("step rejects mismatched state") {
  Fixture f(106, 10);
  CHECK_THROWS_AS(step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 11, f.cfg, RandomStream(1)), std::invalid_argument);
  OptimizerState small = OptimizerState::create(9, f.params.param_count(), f.cfg);
  CHECK_THROWS_AS(step_unimodal(small, f.params, {f.inputs, 0.1}, 4, f.cfg, RandomStream(1)), std::invalid_argument);
  RgclConfig bad = f.cfg;
  bad.rho = -1.0;
  CHECK_THROWS_AS(step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 4, bad, RandomStream(1)), std::invalid_argument);
}

TEST_CASE("optimizer checkpoints round trip and resume bitwise") {
  const auto dir = std::filesystem::temp_directory_path() / "rgcl_test_opt";
  std::filesystem::create_directories(dir);
  for (OptimizerMode mode : {OptimizerMode::momentum, OptimizerMode::adam, OptimizerMode::fixed_tau}) {
    Fixture f(107, 12, mode);
    const RandomStream stream(8);
    for (int k = 0; k < 3; ++k) step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 4, f.cfg, stream);
    save_optimizer(f.opt, dir / "o.bin");
    save_encoder(f.params, dir / "e.bin");
    OptimizerState o = load_optimizer(dir / "o.bin");
    EncoderParams p = load_encoder(dir / "e.bin");
    CHECK(o == f.opt);
    for (int k = 0; k < 3; ++k) {
      step_unimodal(f.opt, f.params, {f.inputs, 0.1}, 4, f.cfg, stream);
      step_unimodal(o, p, {f.inputs, 0.1}, 4, f.cfg, stream);
    }
    CHECK(o == f.opt);
    CHECK(p == f.params);
    CHECK_THROWS(load_bimodal_optimizer(dir / "o.bin"));
  }

  BimodalOptimizerState b = BimodalOptimizerState::create(4, 7, RgclConfig{}, OptimizerMode::adam);
  b.anchors[2].text.tau = 0.123;
  b.anchors[1].image.initialized = true;
  b.step = 77;
  save_optimizer(b, dir / "b.bin");
  CHECK(load_bimodal_optimizer(dir / "b.bin") == b);
  CHECK_THROWS(load_optimizer(dir / "b.bin"));
  std::filesystem::resize_file(dir / "b.bin", 60);
  CHECK_THROWS(load_bimodal_optimizer(dir / "b.bin"));
  CHECK_THROWS(load_optimizer(dir / "nope.bin"));
  std::filesystem::remove_all(dir);
}
