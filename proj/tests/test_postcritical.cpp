#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <numbers>

#include "stablab/postcritical.hpp"

using namespace stablab;

namespace {

const double kPi = std::numbers::pi;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

FamilySpec skew(Complex coupling) {
  // (z^2, w^2 + coupling * lambda * z)
  std::vector<std::vector<std::vector<Complex>>> q(3);
  q[0] = {{}, {}, {Complex{1.0}}};
  q[1] = {{Complex{0.0}, coupling}};
  return FamilySpec::skew_product(2, {{}, {}, {Complex{1.0}}}, q);
}

}  // namespace

TEST_CASE("graph mass of a constant track is the area of U") {
  const TrackFn constant = [](Complex) { return std::vector<TrackSample>{{ProjPoint::affine(0.3), 0.0, 1.0, 0}}; };
  const Window w{ParamRegion::box({-0.5, 0.25, 0.0, 1.0}), PhaseRegion::all()};
  CHECK(graph_masses(constant, 1, w).masses[0] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("graph mass of the identity track over a disc") {
  const TrackFn identity = [](Complex c) {
    return std::vector<TrackSample>{{ProjPoint::affine(c), 1.0 / (1.0 + std::norm(c)), 1.0, 0}};
  };
  // area(U) + 2 pi int_0^{1/2} r dr / (1 + r^2)^2 = pi/4 + pi/5.
  const double oracle = kPi / 4 + kPi / 5;
  QuadratureOptions q;
  q.base = 400;
  const Window w{ParamRegion::disc(0.0, 0.5), PhaseRegion::all()};
  CHECK(graph_masses(identity, 1, w, q).masses[0] == doctest::Approx(oracle).epsilon(2e-3));

  // Stored-track variant with finite-difference speeds.
  MotionTrack t;
  t.grid = ParamGrid{{-0.5, 0.5, -0.5, 0.5}, 400, 400};
  for (std::size_t i = 0; i < t.grid.size(); ++i) t.values.push_back(ProjPoint::affine(t.grid.at(i)));
  bool coarse = true;
  CHECK(graph_mass(t, w, &coarse) == doctest::Approx(oracle).epsilon(2e-3));
  CHECK(!coarse);
}

TEST_CASE("first post-critical track against a finite-difference oracle") {
  const auto fam = FamilySpec::quadratic();
  const Window w{ParamRegion::disc(0.0, 0.5), PhaseRegion::all()};
  QuadratureOptions q;
  q.method = QuadratureOptions::Method::Midpoint;
  q.base = 64;
  q.max_level = 0;
  const auto gm = postcritical_masses(fam, w, 2, 2, q);
  // Oracle: same midpoint rule, |gamma'|_FS by a central difference of gamma(c) = c^2 + c.
  const ParamGrid g{w.U.bounds(), 64, 64};
  double oracle = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Complex c = g.at(i);
    if (std::abs(c) >= 0.5) continue;
    auto gamma = [](Complex x) { return ProjPoint::affine(x * x + x); };
    const double speed = fs_distance(gamma(c + h), gamma(c - h)) / (2 * h);
    oracle += (1.0 + speed * speed) * g.cell_area();
    oracle += g.cell_area();  // the critical point at infinity is fixed
  }
  CHECK(gm.masses[0] == doctest::Approx(oracle).epsilon(1e-4));
}

TEST_CASE("contour form of the speed integral against a fine area integral") {
  // gamma(c) = c^2 + c over the disc |c - 0.1i| < 0.4, phase ball |z - 0.2| < 0.5.
  // Oracle: polar midpoint rule with the analytic derivative 2c + 1.
  const auto fam = FamilySpec::quadratic();
  const Complex c0{0.0, 0.1};
  const double r0 = 0.4;
  for (bool whole : {true, false}) {
    const PhaseRegion B = whole ? PhaseRegion::all() : PhaseRegion::disc(0.2, 0.5);
    const auto gm = postcritical_masses(fam, {ParamRegion::disc(c0, r0), B}, 2, 2);
    double speed_part = 0.0, area_part = 0.0;
    const int nr = 800, nt = 1600;
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nt; ++j) {
        const double r = r0 * (i + 0.5) / nr;
        const Complex c = c0 + std::polar(r, 2.0 * std::numbers::pi * (j + 0.5) / nt);
        const Complex g = c * c + c;
        const double dA = r * (r0 / nr) * (2.0 * std::numbers::pi / nt);
        if (!whole && std::abs(g - 0.2) >= 0.5) continue;
        speed_part += std::norm(2.0 * c + 1.0) / std::pow(1.0 + std::norm(g), 2) * dA;
        area_part += dA;
      }
    // The critical point at infinity is fixed: it adds the area of U only when B is all of P^1.
    const double oracle = speed_part + area_part + (whole ? std::numbers::pi * r0 * r0 : 0.0);
    CHECK(gm.masses[0] == doctest::Approx(oracle).epsilon(whole ? 1e-5 : 1e-2));
  }
}

TEST_CASE("restriction monotonicity and additivity") {
  const auto fam = FamilySpec::quadratic();
  const Window big{ParamRegion::box({-0.3, 0.1, -0.2, 0.2}), PhaseRegion::disc(0.0, 0.6)};
  const Window small{ParamRegion::box({-0.2, 0.0, -0.1, 0.1}), PhaseRegion::disc(0.0, 0.3)};
  QuadratureOptions q;
  q.base = 20;
  const auto a = postcritical_masses(fam, big, 0, 6, q);
  q.base = 10;
  const auto b = postcritical_masses(fam, small, 0, 6, q);
  for (int n = 0; n <= 6; ++n) CHECK(b.masses[n] <= a.masses[n] + 1e-6);

  const auto s = ramification_series(fam, big, 10);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.per_n.size(); ++i) {
    acc += s.per_n[i];
    CHECK(s.partial_sums[i] == acc);
    CHECK(s.per_n[i] >= 0.0);
  }
}

TEST_CASE("ramification series verdicts") {
  const auto pw = ramification_series(FamilySpec::power(2), {ParamRegion::disc(0.0, 0.2), PhaseRegion::disc(0.5, 0.2)}, 20);
  for (double v : pw.per_n) CHECK(v == 0.0);
  CHECK(pw.verdict == MassSeries::Verdict::Converged);

  const auto fam = FamilySpec::quadratic();
  const auto t0 = std::chrono::steady_clock::now();
  const auto stable = ramification_series(fam, {ParamRegion::disc(0.0, 0.05), PhaseRegion::disc(0.5, 0.2)}, 40);
  MESSAGE("stable window rate " << stable.rate << " tail " << stable.tail_bound << " (" << seconds_since(t0) << " s)");
  CHECK(stable.verdict == MassSeries::Verdict::Converged);

  const auto t1 = std::chrono::steady_clock::now();
  const auto mis = ramification_series(fam, {ParamRegion::disc(-2.0, 0.05), PhaseRegion::disc(2.0, 0.2)}, 20);
  MESSAGE("c=-2 window rate " << mis.rate << " last " << mis.per_n.back() << " (" << seconds_since(t1) << " s)");
  CHECK(mis.verdict == MassSeries::Verdict::Diverging);
}

TEST_CASE("verdict fit with periodic visits") {
  // An attracting 3-cycle meets the ball every third step, each visit 8x lighter.
  MassSeries s;
  for (int n = 0; n <= 16; ++n) s.per_n.push_back(n % 3 == 1 ? std::pow(0.125, n / 3) : 0.0);
  classify(s);
  CHECK(s.verdict == MassSeries::Verdict::Converged);
  CHECK(s.rate == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.partial_sums.back() == doctest::Approx(8.0 / 7.0 * (1 - std::pow(0.125, 6))).epsilon(1e-12));

  MassSeries grow;
  for (int n = 0; n <= 16; ++n) grow.per_n.push_back(n % 2 ? 0.01 : 0.0);
  classify(grow);
  CHECK(grow.verdict == MassSeries::Verdict::Diverging);

  MassSeries lone;
  lone.per_n.assign(17, 0.0);
  lone.per_n.back() = 1e-3;
  classify(lone);
  CHECK(lone.verdict == MassSeries::Verdict::Inconclusive);
}

TEST_CASE("random phase balls clear the first post-critical track") {
  const auto U = ParamRegion::disc(Complex{-0.12, 0.74}, 0.05);
  const auto balls = random_phase_balls(FamilySpec::quadratic(), U, 8, 0.25, 1.5, 7);
  REQUIRE(balls.size() == 8);
  for (const auto& B : balls) {
    CHECK(!B.whole);
    CHECK(std::abs(B.center) < 1.5);
    // f(0) = lambda: the ball keeps 1.5 radii from U, up to the 9 x 9 sample spacing.
    CHECK(std::abs(B.center - U.center) - 0.05 >= 1.5 * 0.25 - 0.01);
  }
  const auto again = random_phase_balls(FamilySpec::quadratic(), U, 8, 0.25, 1.5, 7);
  for (std::size_t i = 0; i < balls.size(); ++i) CHECK(again[i].center == balls[i].center);
  CHECK_THROWS_AS(random_phase_balls(FamilySpec::quadratic(), ParamRegion::disc(0.0, 2.0), 8, 0.5, 1.5, 1, 1.5, 200),
                  LabError);
}

TEST_CASE("post-critical mass growth") {
  const auto pw = mass_growth_rate(FamilySpec::power(2), ParamRegion::box({-1, 1, -1, 1}), 10);
  for (double m : pw.masses) CHECK(m == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(std::abs(pw.rho) < 1e-12);

  const auto fam = FamilySpec::quadratic();
  const auto card = mass_growth_rate(fam, ParamRegion::box({-0.3, 0.1, -0.2, 0.2}), 30);
  MESSAGE("cardioid rho " << card.rho);
  CHECK(card.rho < 0.01);
  for (double m : card.masses) CHECK(m < 1.0);

  const auto t0 = std::chrono::steady_clock::now();
  const auto mis = mass_growth_rate(fam, ParamRegion::disc(-2.0, 0.1), 25);
  MESSAGE("c=-2 rho " << mis.rho << " masses " << mis.masses[10] << " " << mis.masses[25] << " (" << seconds_since(t0) << " s)");
  CHECK(mis.rho >= 0.2);
}

TEST_CASE("Monte Carlo mass of critical curves on P^2") {
  // Product family: both components are lines whose images have mass 2^n pi each.
  for (int n = 0; n <= 3; ++n) {
    const auto m = montecarlo_mass_k2(skew(0.0), n, ParamRegion::disc(0.0, 0.1), 20000, 7);
    const double normalized = m.mean / std::pow(2.0, n);
    CHECK(std::abs(normalized - 2 * kPi) < 3.0 * m.se / std::pow(2.0, n) + 1e-9);
  }
  std::vector<double> est, se;
  const auto t0 = std::chrono::steady_clock::now();
  for (int n = 1; n <= 6; ++n) {
    const auto m = montecarlo_mass_k2(skew(1.0), n, ParamRegion::disc(0.0, 0.1), 20000, 11);
    est.push_back(m.mean / std::pow(2.0, n));
    se.push_back(m.se / std::pow(2.0, n));
    MESSAGE("n=" << n << " mass/2^n = " << est.back() << " +- " << se.back());
  }
  MESSAGE("k2 time " << seconds_since(t0) << " s");
  for (std::size_t a = 0; a < est.size(); ++a)
    for (std::size_t b = a + 1; b < est.size(); ++b)
      CHECK(std::abs(est[a] - est[b]) <= 3.0 * std::hypot(se[a], se[b]));
}
