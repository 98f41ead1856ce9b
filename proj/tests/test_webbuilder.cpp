#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stablab/equilibrium.hpp"
#include "stablab/stats.hpp"
#include "stablab/webbuilder.hpp"

using namespace stablab;

namespace {

double chordal_dist(Complex a, Complex b) { return std::abs(a - b) / std::sqrt((1 + std::norm(a)) * (1 + std::norm(b))); }

double chordal_to_infinity(Complex a) { return 1.0 / std::sqrt(1 + std::norm(a)); }

// Roots of a t^2 + b t + c = 0 inside |t| < r.
int roots_inside(Complex a, Complex b, Complex c, double r) {
  const Complex disc = std::sqrt(b * b - 4.0 * a * c);
  int n = 0;
  for (Complex t : {(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)}) n += std::abs(t) < r;
  return n;
}

struct QuadraticWeb {
  BasePoint base;
  std::vector<LineSample> lines;
  BranchTree tree;
};

// One tree for the quadratic family near c = 0, shared by the tests below.
const QuadraticWeb& quadratic_web() {
  static const QuadraticWeb web = [] {
    QuadraticWeb w;
    const auto fam = FamilySpec::quadratic();
    w.base = pick_base(fam, 0.05, {0.2, 0.3});
    w.lines = good_lines(fam, w.base, 0.1, 0.09, 25, 32, 11);
    w.tree = build_branch_tree(fam, w.base, 0.1, w.lines);
    return w;
  }();
  return web;
}

}  // namespace

TEST_CASE("base point clearance") {
  const auto pw = pick_base(FamilySpec::power(2), 0.0, 0.5);
  CHECK(pw.clearance > 0.4);
  CHECK(pw.clearance == doctest::Approx(chordal_dist(0.5, 0.0)).epsilon(1e-12));

  const Complex c = 0.05, z0{0.2, 0.3};
  const auto q = pick_base(FamilySpec::quadratic(), c, z0, {30, 0.05});
  CHECK(q.z == z0);
  double oracle = chordal_to_infinity(z0);
  Complex x = 0.0;
  for (int n = 0; n < 30; ++n) {
    x = x * x + c;
    oracle = std::min(oracle, chordal_dist(x, z0));
  }
  CHECK(q.clearance > 0.05);
  CHECK(q.clearance == doctest::Approx(oracle).epsilon(1e-12));

  try {
    pick_base(FamilySpec::quadratic(), -2.0, 2.0);
    FAIL("z0 = 2 lies on the post-critical track of c = -2");
  } catch (const LabError& e) {
    CHECK(e.kind() == ErrorKind::NoClearPoint);
  }
}

TEST_CASE("slice counts against explicit roots") {
  // Power family: the only finite post-critical point is 0 for every n.
  const BasePoint a0{0.0, 0.05};
  for (double angle : {0.1, 0.7, 1.2}) {
    const Complex u = std::cos(angle), v = std::polar(std::sin(angle), 0.4);
    bool failed = true;
    const auto counts = slice_counts(FamilySpec::power(2), a0, u, v, 0.1, 5, &failed);
    CHECK(!failed);
    for (int c : counts) CHECK(c == (std::abs(v) > 0.5 ? 1 : 0));
  }
  // Quadratic family: f(0) = lambda and f^2(0) = lambda^2 + lambda, on the
  // line (lambda0 + t u, z0 + t v).
  const BasePoint a{0.1, 0.15};
  const double r = 0.3;
  for (double angle : {0.3, 0.8, 1.3}) {
    const Complex u = std::cos(angle), v = std::polar(std::sin(angle), -0.6);
    bool failed = true;
    const auto counts = slice_counts(FamilySpec::quadratic(), a, u, v, r, 1, &failed);
    CHECK(!failed);
    const Complex t1 = (a.z - a.lambda) / (u - v);
    CHECK(counts[0] == (std::abs(t1) < r ? 1 : 0));
    CHECK(counts[1] == roots_inside(u * u, 2.0 * a.lambda * u + u - v, a.lambda * a.lambda + a.lambda - a.z, r));
  }
}

TEST_CASE("good lines") {
  const auto pw = pick_base(FamilySpec::power(2), 0.0, 0.5);
  for (const auto& l : good_lines(FamilySpec::power(2), pw, 0.1, 0.09, 10, 16, 3)) {
    CHECK(l.good);
    CHECK(l.tail_mass == 0.0);
  }

  const auto fam = FamilySpec::quadratic();
  const auto base = pick_base(fam, 0.05, {0.2, 0.3});
  const double r = 0.4 * base.clearance;
  const auto lines = good_lines(fam, base, r, 0.1, 25, 24, 5);
  CHECK(good_fraction(lines) == 1.0);
  const auto half = good_lines(fam, base, r / 2, 0.1, 25, 24, 5);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(half[i].dir_z == lines[i].dir_z);
    CHECK(half[i].tail_mass <= lines[i].tail_mass);
  }

  // A base close to the post-critical set: some lines meet the tracks.
  const BasePoint nearby{0.05, 0.06};
  const auto hit = good_lines(fam, nearby, 0.1, 0.09, 10, 16, 5);
  double total = 0.0;
  for (const auto& l : hit) {
    CHECK(l.tail_mass >= 0.0);
    CHECK(l.good == (!l.failed && l.tail_mass <= 0.09));
    total += l.tail_mass;
  }
  CHECK(total > 0.0);
}

TEST_CASE("power family tree is the full binary tree") {
  const auto fam = FamilySpec::power(2);
  const auto base = pick_base(fam, 0.0, 0.5);
  const auto lines = good_lines(fam, base, 0.1, 0.09, 10, 8, 3);
  TreeOptions o;
  o.n_max = 6;
  const auto tree = build_branch_tree(fam, base, 0.1, lines, o);
  for (int n = 0; n <= 6; ++n) {
    CHECK(tree.S[n].size() == (std::size_t{1} << n));
    // Fiber oracle: the 2^n-th roots of 0.5, each once.
    const int m = 1 << n;
    std::vector<double> angles;
    for (const auto& p : tree.fiber[n]) {
      const Complex w = p.affine_value();
      CHECK(std::abs(std::pow(w, m) - 0.5) < 1e-9);
      angles.push_back(std::arg(w));
    }
    std::sort(angles.begin(), angles.end());
    for (int j = 1; j < m; ++j) CHECK(angles[j] - angles[j - 1] > std::numbers::pi / m);
  }
  for (int n = 1; n <= 6; ++n)
    for (int s = 0; s < (1 << n); ++s) {
      const Complex child = tree.fiber[n][s].affine_value();
      CHECK(std::abs(child * child - tree.fiber[n - 1][tree.parent(s)].affine_value()) < 1e-12);
    }
  CHECK(tree.max_children == 2);
  CHECK(tree.semiconjugacy_residual < 1e-7);

  for (const auto& L : build_web(tree)) {
    CHECK(L.step_defect == 0.0);
    CHECK(L.defect == doctest::Approx(2.0 / L.n).epsilon(1e-12));
    CHECK(L.mass == 1.0);
  }
  for (const auto& L : acriticality_check(fam, tree, lines, 3, 1e-3))
    for (double e : L.estimate) CHECK(e == 0.0);

  o.n_max = 15;
  CHECK_THROWS_AS(build_branch_tree(fam, base, 0.1, lines, o), LabError);
}

TEST_CASE("quadratic tree near c = 0: lemma bounds") {
  const auto& w = quadratic_web();
  const auto& t = w.tree;
  const double sqrt_eps = std::sqrt(t.opts.eps);
  double prev = 1.0;
  for (int n = 0; n <= t.opts.n_max; ++n) {
    const double size = static_cast<double>(t.S[n].size());
    CHECK(size >= (1.0 - sqrt_eps) * std::pow(2.0, n));
    CHECK(size <= std::pow(2.0, n));
    const double mass = size / std::pow(2.0, n);
    CHECK(mass <= prev + 1e-15);
    prev = mass;
    for (int s : t.S[n])
      if (n > 0) CHECK(t.S_slot[n - 1][t.parent(s)] >= 0);
  }
  CHECK(t.max_children <= 2);
  CHECK(t.semiconjugacy_residual < 1e-7);
  CHECK(t.fiber_residual < 1e-6);
}

TEST_CASE("quadratic web: defect, marginals, acriticality") {
  const auto& w = quadratic_web();
  const auto fam = FamilySpec::quadratic();
  for (const auto& L : build_web(w.tree)) {
    CHECK(L.defect <= 3.0 / L.n + 1e-9);
    const auto web = cesaro_web(w.tree, L.n);
    CHECK(web.total_weight() == doctest::Approx(L.cesaro_mass).epsilon(1e-12));
  }

  const int n = w.tree.opts.n_max;
  for (std::size_t li : {std::size_t{0}, std::size_t{3}, std::size_t{12}}) {
    std::vector<ProjPoint> values;
    std::vector<double> weights;
    web_marginal(w.tree, n, li, values, weights);
    const Complex lambda = w.tree.ball.lambdas[li];
    const auto sample = sample_equilibrium(fam, lambda, 2048, 30, 9);
    std::vector<double> a, b;
    for (const auto& p : values) a.push_back(std::arg(p.affine_value()));
    for (const auto& p : sample.points) b.push_back(std::arg(p.affine_value()));
    const double ks = ks_two_sample(a, weights, b, std::vector<double>(b.size(), 1.0));
    MESSAGE("marginal KS at lambda index " << li << ": " << ks);
    CHECK(ks < 0.1);
  }

  const auto acr = acriticality_check(fam, w.tree, w.lines, 3, 1e-3);
  for (const auto& L : acr)
    for (int p = 0; p <= 3; ++p) CHECK(L.estimate[p] / 2 <= L.bound_mean[p] + 3 * L.bound_se[p] + 1e-12);
  for (int p = 0; p <= 3; ++p) CHECK(acr.back().estimate[p] < 0.02);
}
