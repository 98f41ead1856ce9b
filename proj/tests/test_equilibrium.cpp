#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "stablab/equilibrium.hpp"
#include "stablab/rng.hpp"
#include "stablab/stats.hpp"

using namespace stablab;

namespace {

FamilySpec quadratic_at(Complex c) {
  return FamilySpec::polynomial({{c}, {Complex{}}, {Complex{1.0}}});
}

}  // namespace

TEST_CASE("green function examples") {
  const auto sq = FamilySpec::power(2);
  for (int depth : {1, 5, 40})
    CHECK(green(sq, 0.0, ProjPoint::affine(2.0), depth).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(green(sq, 0.0, ProjPoint::affine(std::polar(1.0, 0.7)), 50).value) < 1e-14);

  const auto q = FamilySpec::quadratic();
  const double g50 = green(q, 1.0, ProjPoint::affine(0.0), 50).value;
  const double g60 = green(q, 1.0, ProjPoint::affine(0.0), 60).value;
  CHECK(g60 > 0.0);
  CHECK(std::abs(g60 - g50) < 1e-9);
  // Direct oracle: 2^-n log|p^n(0)| with small n (no overflow yet).
  Complex z = 0.0;
  for (int i = 0; i < 6; ++i) z = z * z + 1.0;
  CHECK(g60 == doctest::Approx(std::log(std::abs(z)) / 64.0).epsilon(1e-6));
}

TEST_CASE("green functional equation") {
  Rng rng(3);
  const auto q = FamilySpec::quadratic();
  const FamilySpec cubic = FamilySpec::polynomial({{Complex{0.0}, Complex{1.0}}, {Complex{0.5}}, {Complex{}}, {Complex{1.0}}});
  for (const auto* fam : {&q, &cubic}) {
    for (int i = 0; i < 100; ++i) {
      const Complex c{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      const auto z = ProjPoint::affine({rng.uniform(-2, 2), rng.uniform(-2, 2)});
      const FrozenMap map(*fam, c);
      const auto g = green(map, z, 50);
      const auto gf = green(map, ProjPoint(map.apply(z.lift())), 50);
      CHECK(std::abs(gf.value - fam->d * g.value) <= 1e-8 + fam->d * g.truncation + gf.truncation);
    }
  }
}

TEST_CASE("inverse iteration on z^2 samples the circle uniformly") {
  const auto s = sample_equilibrium(FamilySpec::power(2), 0.0, 4096, 30, 17);
  std::vector<double> angles;
  for (const auto& p : s.points) {
    CHECK(std::abs(std::abs(p.affine_value()) - 1.0) < 1e-6);
    angles.push_back(std::arg(p.affine_value()));
  }
  const double ks = ks_statistic(angles, [](double t) { return (t + std::numbers::pi) / (2 * std::numbers::pi); });
  CHECK(ks < 0.05);
  double wsum = 0.0;
  for (double w : s.weights) wsum += w;
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inverse iteration on z^2 - 2 follows the arcsine law") {
  const auto s = sample_equilibrium(FamilySpec::quadratic(), -2.0, 4096, 30, 5);
  std::vector<double> xs;
  for (const auto& p : s.points) {
    const Complex z = p.affine_value();
    CHECK(std::abs(z.imag()) < 1e-6);
    CHECK(std::abs(z.real()) <= 2.0 + 1e-6);
    xs.push_back(z.real());
  }
  const double ks = ks_statistic(xs, [](double x) {
    x = std::clamp(x, -2.0, 2.0);
    return std::acos(-x / 2.0) / std::numbers::pi;
  });
  CHECK(ks < 0.05);
}

TEST_CASE("fiber consistency and pushforward invariance") {
  const auto fam = FamilySpec::quadratic();
  const Complex c{0.0, 0.25};
  const FrozenMap map(fam, c);
  const auto s = sample_equilibrium(fam, c, 2048, 30, 9);
  for (const auto& p : s.points) {
    // Forward iteration amplifies the backward rounding error by |(f^30)'|.
    HVec h = p.lift();
    double amplification = 1.0;
    for (int i = 0; i < 30; ++i) {
      amplification *= derivative(map, ProjPoint(h)).jac_abs;
      h = map.apply(h);
    }
    CHECK(fs_distance(h, s.seed_point.lift()) < 1e-13 * amplification + 1e-12);
  }
  const auto fresh = sample_equilibrium(fam, c, 2048, 30, 10);
  std::vector<double> pushed, other;
  for (const auto& p : s.points) pushed.push_back(ProjPoint(map.apply(p.lift())).affine_value().real());
  for (const auto& p : fresh.points) other.push_back(p.affine_value().real());
  CHECK(ks_two_sample(pushed, other) < 0.08);
}

TEST_CASE("sampling is deterministic") {
  const auto a = sample_equilibrium(FamilySpec::quadratic(), -1.0, 64, 20, 42);
  const auto b = sample_equilibrium(FamilySpec::quadratic(), -1.0, 64, 20, 42);
  std::ostringstream sa, sb;
  write_sample_csv(sa, a);
  write_sample_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("index,re,im,chart\n", 0) == 0);
}

TEST_CASE("Birkhoff averages for power maps") {
  for (int d : {2, 3}) {
    const auto fam = FamilySpec::power(d);
    const auto s = sample_equilibrium(fam, 0.0, 256, 30, 1);
    const auto b = birkhoff_lyapunov(fam, 0.0, s, 50);
    CHECK(b.mean == doctest::Approx(std::log(d)).epsilon(1e-6));
  }
}

TEST_CASE("Birkhoff average for z^2 - 1 matches log 2") {
  const auto fam = FamilySpec::quadratic();
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = sample_equilibrium(fam, -1.0, 1024, 30, 2);
  const auto b = birkhoff_lyapunov(fam, -1.0, s, 200);
  MESSAGE("birkhoff(-1) = " << b.mean << " +- " << b.se << " in "
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s");
  CHECK(std::abs(b.mean - std::log(2.0)) < 3.0 * b.se + 1e-12);
  CHECK(b.clipped == 0);
}
