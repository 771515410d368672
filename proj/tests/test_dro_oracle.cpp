#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "rgcl/dro_oracle.hpp"
#include "rgcl/loss.hpp"
#include "test_support.hpp"

using namespace rgcl;

namespace {

double kl(std::span<const double> p) {
  double s = 0.0;
  for (double q : p)
    if (q > 0.0) s += q * std::log(static_cast<double>(p.size()) * q);
  return s;
}

}  // namespace

TEST_CASE("two-negative worked example") {
  // KL(p, 1/2) = 0.2 solved at 30 digits
  const auto sol = oracle::solve_primal(Vector{0.0, -1.0}, 0.2, 0.0);
  CHECK(sol.constraint_active);
  CHECK(sol.p[0] == doctest::Approx(0.805172837229815362).epsilon(1e-9));
  CHECK(sol.lambda == doctest::Approx(0.704749378813326421).epsilon(1e-8));
  CHECK(sol.kl <= 0.2 + 1e-12);
  CHECK(std::abs(sol.p[0] - 0.8) <= 0.02);
}

TEST_CASE("three-negative primal and dual agree with high-precision values") {
  const Vector h{0.0, -1.0, 0.5};
  const auto primal = oracle::solve_primal(h, 0.3, 0.05);
  const auto dual = oracle::solve_dual_tau(h, 0.05, 0.3);
  CHECK(primal.objective == doctest::Approx(0.255699305161053330).epsilon(1e-9));
  CHECK(dual.value == doctest::Approx(0.255699305161053330).epsilon(1e-9));
  CHECK(dual.tau == doctest::Approx(0.612286467226253948).epsilon(1e-6));
  CHECK(primal.lambda + 0.05 == doctest::Approx(dual.tau).epsilon(1e-6));
}

TEST_CASE("inactive constraint leaves the multiplier at zero") {
  // nearly flat scores: softmax at tau0 is already within the KL ball
  const Vector h{0.0, 0.001, -0.001};
  const auto sol = oracle::solve_primal(h, 0.5, 0.05);
  CHECK_FALSE(sol.constraint_active);
  CHECK(sol.lambda == 0.0);
  const Vector soft = softmax_shifted(Vector{0.0, 0.02, -0.02});
  for (std::size_t j = 0; j < 3; ++j) CHECK(sol.p[j] == doctest::Approx(soft[j]).epsilon(1e-14));
}

TEST_CASE("strong duality over random instances") {
  RandomStream rs(61);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = 2 + rs.uniform_below(10);
    const double rho = 0.02 + rs.uniform();
    const double tau0 = 0.01 + 0.2 * rs.uniform();
    const Vector h = test::uniform_vector(rs, m, -2.0, 2.0);
    const auto primal = oracle::solve_primal(h, rho, tau0);
    const auto dual = oracle::solve_dual_tau(h, tau0, rho);
    CHECK(std::abs(primal.objective - dual.value) <= 1e-8 * std::max(1.0, std::abs(dual.value)));
    CHECK(primal.kl <= rho + 1e-9);
    CHECK(std::abs(kl(primal.p) - primal.kl) <= 1e-12);
    CHECK(dual.tau >= tau0);
    CHECK(dual.tau <= tau0 + 2.0 / rho + 1e-12);
    CHECK(primal.lambda <= 2.0 / rho + 1e-9);
  }
}

TEST_CASE("primal weights equal softmax at the optimal temperature") {
  RandomStream rs(62);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 2 + rs.uniform_below(6);
    const Vector h = test::uniform_vector(rs, m, -2.0, 2.0);
    const auto primal = oracle::solve_primal(h, 0.1 + rs.uniform(), 0.05);
    HardnessVector hv;
    hv.values = h;
    const DistributionalWeights p = p_star(hv, primal.lambda + 0.05);
    for (std::size_t j = 0; j < m; ++j) CHECK(std::abs(p.p[j] - primal.p[j]) <= 1e-9);
  }
}

TEST_CASE("grid search agrees with bisection for two and three negatives") {
  RandomStream rs(63);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 2 + (t % 2);
    const double rho = 0.05 + 0.5 * rs.uniform();
    const Vector h = test::uniform_vector(rs, m, -2.0, 2.0);
    const auto exact = oracle::solve_primal(h, rho, 0.05);
    const auto grid = oracle::grid_search_simplex(h, rho, 0.05, m == 2 ? 1e-4 : 2e-3);
    CHECK(grid.value <= exact.objective + 1e-9);
    CHECK(exact.objective - grid.value <= 5e-3);
    CHECK(kl(grid.p) <= rho + 1e-12);
  }
  CHECK_THROWS_WITH_AS(oracle::grid_search_simplex(Vector{0, 1, 2, 3}, 0.1, 0.05, 1e-3),
                       "grid oracle limited to m in {2, 3}", std::invalid_argument);
  CHECK_THROWS_AS(oracle::grid_search_simplex(Vector{0, 1}, 0.1, 0.05, 0.1), std::invalid_argument);
}

TEST_CASE("max weight grows as the ball shrinks") {
  RandomStream rs(64);
  for (int t = 0; t < 50; ++t) {
    const Vector h = test::uniform_vector(rs, 2 + rs.uniform_below(6), -2.0, 2.0);
    double prev = 0.0;
    for (double rho : {0.05, 0.1, 0.2, 0.4, 0.8}) {
      const auto sol = oracle::solve_primal(h, rho, 0.05);
      const double top = *std::max_element(sol.p.begin(), sol.p.end());
      CHECK(top >= prev - 1e-9);
      prev = top;
    }
  }
}

TEST_CASE("dual objective is convex in tau") {
  RandomStream rs(65);
  for (int t = 0; t < 100; ++t) {
    const Vector h = test::uniform_vector(rs, 2 + rs.uniform_below(6), -2.0, 2.0);
    const double a = 0.05 + 3.0 * rs.uniform(), b = 0.05 + 3.0 * rs.uniform();
    const double mid = oracle::dual_objective(h, 0.5 * (a + b), 0.05, 0.3);
    const double chord = 0.5 * (oracle::dual_objective(h, a, 0.05, 0.3) + oracle::dual_objective(h, b, 0.05, 0.3));
    CHECK(mid <= chord + 1e-12);
  }
}

TEST_CASE("oracle rejects bad input") {
  CHECK_THROWS_AS(oracle::solve_primal(Vector{0.0}, 0.1, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(oracle::solve_primal(Vector{0.0, 1.0}, 0.0, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(oracle::solve_primal(Vector{0.0, 1.0}, 0.1, -0.05), std::invalid_argument);
  CHECK_THROWS_AS(oracle::solve_dual_tau(Vector{}, 0.05, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(oracle::finite_diff_grad([](std::span<const double>) { return 0.0; }, Vector{1.0}, 1e-2),
                  std::invalid_argument);
  CHECK_THROWS_AS(oracle::finite_diff_grad([](std::span<const double> x) { return std::log(x[0]); }, Vector{0.0}, 1e-5),
                  std::runtime_error);
}

TEST_CASE("finite differences are exact on quadratics") {
  const Vector x{0.3, -1.2, 2.0};
  const Vector g = oracle::finite_diff_grad(
      [](std::span<const double> v) { return v[0] * v[0] + 3.0 * v[0] * v[1] - v[2] * v[2]; }, x, 1e-4);
  CHECK(g[0] == doctest::Approx(2 * 0.3 + 3 * -1.2).epsilon(1e-9));
  CHECK(g[1] == doctest::Approx(3 * 0.3).epsilon(1e-9));
  CHECK(g[2] == doctest::Approx(-4.0).epsilon(1e-9));
}

TEST_CASE("reference gradient rejects oversized problems") {
  RandomStream rs(66);
  const EncoderParams p = init_encoder(2, 2, 2, Activation::tanh, rs);
  const ViewPairs big{Matrix(257, 2, 1.0), Matrix(257, 2, 1.0)};
  CHECK_THROWS_AS(oracle::full_batch_reference(p, big, Vector(257, 0.5), RgclConfig{}), std::invalid_argument);
  const ViewPairs one{Matrix(1, 2, 1.0), Matrix(1, 2, 1.0)};
  CHECK_THROWS_AS(oracle::full_batch_reference(p, one, Vector(1, 0.5), RgclConfig{}), std::invalid_argument);
}
