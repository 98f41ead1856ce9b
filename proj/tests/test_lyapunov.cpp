#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <numbers>

#include "stablab/lyapunov.hpp"
#include "stablab/rng.hpp"

using namespace stablab;

namespace {

const double kLog2 = std::log(2.0);

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Independent orbit oracle: bounded critical orbit of z^2 + c.
bool bounded(Complex c) {
  Complex z = 0.0;
  for (int i = 0; i < 1000; ++i) {
    z = z * z + c;
    if (std::abs(z) > 2.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("repelling cycles of z^2") {
  const auto sq = FamilySpec::power(2);
  const auto one = repelling_cycles(sq, 0.0, 1);
  REQUIRE(one.cycles.size() == 1);
  CHECK(one.cycles[0].points[0].equals(ProjPoint::affine(1.0), 1e-10));
  CHECK(std::abs(one.cycles[0].multiplier) == doctest::Approx(2.0));
  CHECK(one.non_repelling == 2);

  const auto two = repelling_cycles(sq, 0.0, 2);
  int primitive = 0;
  for (const auto& c : two.cycles) {
    if (c.period != 2) continue;
    ++primitive;
    CHECK(std::abs(c.multiplier) == doctest::Approx(4.0));
    for (const auto& p : c.points) CHECK(std::abs(std::pow(p.affine_value(), 3) - 1.0) < 1e-10);
  }
  CHECK(primitive == 1);
  CHECK(two.repelling_points() == 3);
}

TEST_CASE("fixed points of z^2 - 1") {
  const auto q = FamilySpec::quadratic();
  const auto set = repelling_cycles(q, -1.0, 1);
  REQUIRE(set.cycles.size() == 2);
  const double r5 = std::sqrt(5.0);
  for (const auto& c : set.cycles) {
    const Complex z = c.points[0].affine_value();
    CHECK(std::abs(z.imag()) < 1e-12);
    CHECK((std::abs(z.real() - (1 + r5) / 2) < 1e-12 || std::abs(z.real() - (1 - r5) / 2) < 1e-12));
  }
}

TEST_CASE("cycle invariants: metric independence and count") {
  Rng rng(8);
  const auto q = FamilySpec::quadratic();
  for (int trial = 0; trial < 6; ++trial) {
    const Complex c{rng.uniform(-2, 0.5), rng.uniform(-1, 1)};
    const FrozenMap map(q, c);
    const auto set = repelling_cycles(map, 5);
    CHECK(set.repelling_points() <= 33);
    CHECK(set.max_residual < 1e-6);
    for (const auto& cyc : set.cycles) {
      CHECK(cyc.one_step_log_jac_sum == doctest::Approx(std::log(std::abs(cyc.multiplier))).epsilon(1e-8));
      // Same sum with every Jacobian taken in the opposite chart where admissible.
      double other = 0.0;
      bool ok = true;
      for (const auto& p : cyc.points) {
        try {
          other += std::log(derivative(map, p, p.lift()[0] == Complex{1.0} ? 1 : 0, -1).jac_abs);
        } catch (const LabError&) {
          ok = false;
        }
      }
      if (ok) CHECK(other == doctest::Approx(cyc.one_step_log_jac_sum).epsilon(1e-8));
      for (std::size_t j = 0; j < cyc.points.size(); ++j) {
        const auto next = ProjPoint(map.apply(cyc.points[j].lift()));
        CHECK(next.equals(cyc.points[(j + 1) % cyc.points.size()], 1e-7));
      }
    }
  }
  for (int n = 1; n <= 8; ++n)
    CHECK(repelling_cycles(FamilySpec::power(2), 0.0, n).repelling_points() == (1 << n) - 1);
}

TEST_CASE("approximation formula") {
  CHECK(approx_lyapunov(FamilySpec::power(2), 0.0, 3).value == doctest::Approx(7.0 * kLog2 / 8.0).epsilon(1e-12));
  const auto cube = approx_lyapunov(FamilySpec::power(3), 0.0, 4);
  CHECK(cube.value == doctest::Approx(80.0 * std::log(3.0) / 81.0).epsilon(1e-12));
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = approx_lyapunov(FamilySpec::quadratic(), -1.0, 8);
  MESSAGE("approx(-1, 8) = " << a.value << " in " << seconds_since(t0) << " s");
  CHECK(std::abs(a.value - kLog2) < 0.02);
}

TEST_CASE("Green formula") {
  const auto q = FamilySpec::quadratic();
  CHECK(green_formula_lyapunov(q, 0.0, 60) == doctest::Approx(kLog2).epsilon(1e-14));
  CHECK(green_formula_lyapunov(q, -2.0, 60) == doctest::Approx(kLog2).epsilon(1e-12));
  // c = 3: G(0) = G(3)/2 and 3 -> 12 -> 147 escapes fast.
  Complex z = 0.0;
  for (int i = 0; i < 5; ++i) z = z * z + 3.0;
  const double oracle = kLog2 + std::log(std::abs(z)) / 32.0;
  CHECK(green_formula_lyapunov(q, 3.0, 60) == doctest::Approx(oracle).epsilon(1e-8));
  CHECK_THROWS_AS(green_formula_lyapunov(FamilySpec::skew_product(2, {{}, {}, {Complex{1.0}}}, {{{}, {}, {Complex{1.0}}}}), 0.0, 10), LabError);
}

TEST_CASE("estimator coherence on random quadratic parameters") {
  Rng rng(21);
  const auto q = FamilySpec::quadratic();
  int inside = 0, outside = 0;
  while (inside < 4 || outside < 4) {
    const Complex c{rng.uniform(-2.2, 0.6), rng.uniform(-1.2, 1.2)};
    const bool in = bounded(c);
    if ((in && inside >= 4) || (!in && outside >= 4)) continue;
    (in ? inside : outside)++;
    const double g = green_formula_lyapunov(q, c, 60);
    const double a = approx_lyapunov(q, c, 8).value;
    if (in) CHECK(g == doctest::Approx(kLog2).epsilon(1e-6));
    CHECK(std::abs(g - a) < std::max(1e-2, 0.05 * (g - kLog2) + 1e-2));
  }
}

TEST_CASE("raster of the power family is constant and harmonic") {
  const ParamGrid grid{{-1, 1, -1, 1}, 16, 16};
  const auto r = lyapunov_raster(FamilySpec::power(3), grid, Estimator::GreenFormula, {});
  for (double v : r.values) CHECK(v == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int ix = static_cast<int>(i % 16), iy = static_cast<int>(i / 16);
    if (r.interior(ix, iy)) CHECK(std::abs(r.laplacian[i]) < 1e-12);
    else CHECK(std::isnan(r.laplacian[i]));
  }
}

TEST_CASE("laplacian vanishes in stable components") {
  const auto q = FamilySpec::quadratic();
  // 3x3 patches centred at c = 0 and c = -1.
  for (Complex c : {Complex(0.0), Complex(-1.0)}) {
    const double h = 4.0 / 64;
    const ParamGrid grid{{c.real() - 1.5 * h, c.real() + 1.5 * h, c.imag() - 1.5 * h, c.imag() + 1.5 * h}, 3, 3};
    const auto r = lyapunov_raster(q, grid, Estimator::GreenFormula, {});
    CHECK(std::abs(r.laplacian[grid.index(1, 1)]) < 1e-6);
  }
  const ParamGrid cardioid{{-0.4, 0.2, -0.3, 0.3}, 24, 24};
  CHECK(lyapunov_raster(q, cardioid, Estimator::GreenFormula, {}).total_mass() < 1e-4);
}

TEST_CASE("escape-time reference") {
  const ParamGrid grid{{-2.5, 1.5, -2, 2}, 64, 64};
  const auto e = escape_time_quadratic(grid, 1000);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(static_cast<bool>(e.inside[i]) == bounded(grid.at(i)));
  // c = 0 sits deep inside, c = -2 on the boundary antenna.
  const auto cell = [&](Complex c) {
    return std::pair<int, int>{static_cast<int>((c.real() + 2.5) / grid.dx()), static_cast<int>((c.imag() + 2.0) / grid.dy())};
  };
  auto [x0, y0] = cell(0.0);
  CHECK(e.distance_at(x0, y0) >= 2);
  auto [x2, y2] = cell(-2.0);
  CHECK(e.distance_at(x2, y2) <= 1);
}

TEST_CASE("escape-time reference resolves thin filaments") {
  // Brute-force oracle: 8 x 8 sub-samples per cell. A cell whose sub-samples
  // disagree contains boundary points and must be within one cell of the
  // oracle boundary.
  const ParamGrid grid{{-2.5, 1.5, -2, 2}, 128, 128};
  const auto e = escape_time_quadratic(grid, 1000);
  int mixed = 0, missed_by_samples = 0;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      int in = 0;
      for (int sy = 0; sy < 8; ++sy)
        for (int sx = 0; sx < 8; ++sx)
          in += bounded({grid.rect.re_min + (ix + (sx + 0.5) / 8) * grid.dx(),
                         grid.rect.im_min + (iy + (sy + 0.5) / 8) * grid.dy()});
      if (in == 0 || in == 64) continue;
      ++mixed;
      missed_by_samples += !e.inside[grid.index(ix, iy)] && in < 4;
      CHECK(e.distance_at(ix, iy) <= 1);
    }
  MESSAGE(mixed << " mixed cells, " << missed_by_samples << " with only a few bounded sub-samples");
  CHECK(mixed > 0);
}
