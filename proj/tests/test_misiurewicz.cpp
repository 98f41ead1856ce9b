#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "stablab/misiurewicz.hpp"
#include "stablab/parallel.hpp"

using namespace stablab;

namespace {

Complex quad_iterate(Complex c, Complex z, int n) {
  for (int i = 0; i < n; ++i) z = z * z + c;
  return z;
}

const MisiurewiczHit* hit_near(const std::vector<MisiurewiczHit>& hits, Complex target, double tol) {
  for (const auto& h : hits)
    if (std::abs(h.lambda - target) < tol) return &h;
  return nullptr;
}

}  // namespace

TEST_CASE("collision function against the closed form on the alpha fixed point") {
  const auto fam = FamilySpec::quadratic();
  for (Complex c : {Complex{-1.5}, Complex{-1.8, 0.2}, Complex{-2.0}}) {
    const Complex root = std::sqrt(1.0 - 4.0 * c);
    const Complex w = (1.0 + root) / 2.0;
    const auto v = collision_value(fam, c, 0.0, w + 0.01, 2, 1);
    REQUIRE(v.ok);
    CHECK(std::abs(v.w - w) < 1e-13);
    CHECK(std::abs(v.h - (c * c + c - w)) < 1e-13);
    CHECK(std::abs(v.dh - (2.0 * c + 1.0 + 1.0 / root)) < 1e-8);
    CHECK(std::abs(v.multiplier - 2.0 * w) < 1e-12);
  }
  const auto v = collision_value(fam, -2.0, 0.0, 2.0, 2, 1);
  CHECK(std::abs(v.dh - Complex{-8.0 / 3.0}) < 1e-8);
}

TEST_CASE("c = -2 is found") {
  const auto hits = find_misiurewicz(FamilySpec::quadratic(), {-2.1, -1.9, -0.1, 0.1}, 2, 1, 8, 3);
  const auto* h = hit_near(hits, -2.0, 1e-10);
  REQUIRE(h != nullptr);
  CHECK(h->residual < 1e-9);
  CHECK(h->transversality == doctest::Approx(8.0 / 3.0).epsilon(1e-6));
  CHECK(h->multiplier_modulus == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(h->cycle_point - 2.0) < 1e-12);
}

TEST_CASE("c = i is found on the repelling 2-cycle") {
  // 0 -> i -> i - 1 -> -i -> i - 1: f^3(0) = -i on the cycle {i - 1, -i}.
  const auto hits = find_misiurewicz(FamilySpec::quadratic(), {-0.1, 0.1, 0.9, 1.1}, 3, 2, 8, 5);
  const auto* h = hit_near(hits, Complex{0, 1}, 1e-10);
  REQUIRE(h != nullptr);
  CHECK(h->residual < 1e-9);
  CHECK(h->transversality > 1e-6);
  CHECK(std::abs(h->cycle_point - Complex{0, -1}) < 1e-10);
  const Complex a{-1, 1}, b{0, -1};
  CHECK(h->multiplier_modulus == doctest::Approx(std::abs(4.0 * a * b)).epsilon(1e-10));
}

TEST_CASE("every hit is a genuine transversal collision") {
  const Rect rect{-2.2, 0.6, -1.2, 1.2};
  const auto hits = find_misiurewicz(FamilySpec::quadratic(), rect, 3, 2, 40, 11);
  CHECK(!hits.empty());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const auto& h = hits[i];
    CHECK(rect.contains(h.lambda));
    CHECK(h.residual < 1e-9);
    CHECK(h.transversality > 1e-6);
    CHECK(h.multiplier_modulus > 1.0);
    // Direct orbit oracle: f^3(0) = w, f^2(w) = w, f(w) != w.
    CHECK(std::abs(quad_iterate(h.lambda, 0.0, 3) - h.cycle_point) < 1e-8);
    CHECK(std::abs(quad_iterate(h.lambda, h.cycle_point, 2) - h.cycle_point) < 1e-8);
    CHECK(std::abs(quad_iterate(h.lambda, h.cycle_point, 1) - h.cycle_point) > 1e-6);
    for (std::size_t j = i + 1; j < hits.size(); ++j) CHECK(std::abs(h.lambda - hits[j].lambda) >= 1e-8);
  }
}

TEST_CASE("power family has no hits") {
  CHECK(find_misiurewicz(FamilySpec::power(2), {-1, 1, -1, 1}, 2, 1, 8, 1).empty());
  CHECK(find_misiurewicz(FamilySpec::power(3), {-1, 1, -1, 1}, 3, 2, 8, 1).empty());
}

TEST_CASE("hits do not depend on the worker count") {
  const Rect rect{-2.2, 0.6, -1.2, 1.2};
  set_thread_count(1);
  const auto a = find_misiurewicz(FamilySpec::quadratic(), rect, 2, 2, 16, 7);
  set_thread_count(4);
  const auto b = find_misiurewicz(FamilySpec::quadratic(), rect, 2, 2, 16, 7);
  set_thread_count(1);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].lambda == b[i].lambda);
    CHECK(a[i].residual == b[i].residual);
  }
}

TEST_CASE("membership in the bifurcation raster") {
  const ParamGrid grid{{-2.5, 1.5, -2.0, 2.0}, 128, 128};
  const auto raster = lyapunov_raster(FamilySpec::quadratic(), grid, Estimator::GreenFormula, {});
  const auto in = check_in_bifurcation(std::vector<Complex>{-2.0, Complex{0, 1}, 0.0}, raster, 2.0);
  CHECK(in[0]);
  CHECK(in[1]);
  CHECK(!in[2]);
  CHECK(laplacian_mass_near(0.0, raster, 2.0) < 1e-12);
  try {
    check_in_bifurcation(std::vector<Complex>{3.0}, raster, 2.0);
    FAIL("3 lies outside the raster");
  } catch (const LabError& e) {
    CHECK(e.kind() == ErrorKind::OutOfRaster);
  }
}
