#include "stablab/equilibrium.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>

#include "stablab/parallel.hpp"
#include "stablab/rng.hpp"
#include "stablab/stats.hpp"

namespace stablab {

GreenValue green(const FrozenMap& map, const ProjPoint& z, int depth) {
  if (depth < 1) throw LabError(ErrorKind::InvalidArgument, "green depth must be >= 1");
  HVec h = z.lift();
  const Complex last = h[h.n - 1];
  if (last != Complex{}) h = h.scaled(1.0 / last);
  const double m0 = h.max_norm();
  h = h.scaled(1.0 / m0);
  const double d = map.d();
  double value = std::log(m0);
  double weight = 1.0;
  double term = 0.0;
  for (int j = 0; j < depth; ++j) {
    double s;
    h = map.apply(h, s);
    weight /= d;
    term = weight * std::log(s);
    value += term;
  }
  return {value, depth, std::abs(term) / (d - 1.0)};
}

GreenValue green(const FamilySpec& family, Complex lambda, const ProjPoint& z, int depth) {
  family.require_in_domain(lambda);
  return green(FrozenMap(family, lambda), z, depth);
}

namespace {

ProjPoint pick_seed_point(const FamilySpec& family, const FrozenMap& map, std::uint64_t seed) {
  Rng rng(seed, Stream::Seed);
  const auto crit = critical_points(map);
  for (int attempt = 0; attempt < 256; ++attempt) {
    const double r = 4.0 * std::sqrt(rng.uniform());
    const Complex z = std::polar(r, 2.0 * std::numbers::pi * rng.uniform());
    const ProjPoint p = ProjPoint::affine(z);
    if (family.is_polynomial()) {
      if (green(map, p, 40).value <= 1e-6) continue;
    } else {
      bool near = false;
      for (const auto& c : crit) near = near || fs_distance(map.apply(c.point.lift()), p.lift()) < 1e-6;
      if (near) continue;
    }
    return p;
  }
  throw LabError(ErrorKind::RootFinding, "no admissible seed point for inverse iteration");
}

}  // namespace

MeasureSample sample_equilibrium(const FamilySpec& family, Complex lambda, int n_points, int depth,
                                 std::uint64_t seed) {
  if (family.k != 1) throw LabError(ErrorKind::InvalidArgument, "equilibrium sampling requires k = 1");
  if (n_points < 1 || depth < 0) throw LabError(ErrorKind::InvalidArgument, "bad sample size or depth");
  family.require_in_domain(lambda);
  const FrozenMap map(family, lambda);
  MeasureSample out;
  out.lambda = lambda;
  out.kind = MeasureSample::Kind::InverseIteration;
  out.depth = depth;
  out.seed = seed;
  out.seed_point = pick_seed_point(family, map, seed);
  out.points.assign(static_cast<std::size_t>(n_points), ProjPoint());
  out.weights.assign(static_cast<std::size_t>(n_points), 1.0 / n_points);
  parallel_for(out.points.size(), [&](std::size_t i) {
    Rng rng(seed, Stream::Sampling, i);
    ProjPoint z = out.seed_point;
    for (int j = 0; j < depth; ++j) {
      const auto pre = preimages(map, z);
      z = pre[rng.below(pre.size())];
    }
    out.points[i] = z;
  });
  return out;
}

BirkhoffResult birkhoff_lyapunov(const FamilySpec& family, Complex lambda, const MeasureSample& sample,
                                 int n_iter) {
  if (n_iter < 1) throw LabError(ErrorKind::InvalidArgument, "n_iter must be >= 1");
  if (sample.lambda != lambda)
    throw LabError(ErrorKind::InvalidArgument, "sample was drawn at a different parameter");
  family.require_in_domain(lambda);
  const FrozenMap map(family, lambda);
  const auto crit = critical_points(map);
  const std::size_t n = sample.points.size();
  std::vector<double> per_point(n);
  std::vector<int> clipped(n, 0);
  std::vector<char> near(n, 0);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(sample.seed, Stream::Birkhoff, i);
    ProjPoint z = sample.points[i];
    double sum = 0.0;
    for (int j = 0; j < n_iter; ++j) {
      for (const auto& c : crit)
        if (fs_distance(z, c.point) < 1e-12) near[i] = 1;
      double term = std::log(derivative(map, z).jac_abs);
      if (!(term >= kLogJacFloor)) {
        term = kLogJacFloor;
        ++clipped[i];
      }
      sum += term;
      if (j + 1 < n_iter) {
        const auto pre = preimages(map, z);
        z = pre[rng.below(pre.size())];
      }
    }
    per_point[i] = sum / n_iter;
  });
  const auto ms = mean_se(per_point);
  BirkhoffResult r;
  r.mean = ms.mean;
  r.se = ms.se;
  for (std::size_t i = 0; i < n; ++i) {
    r.clipped += clipped[i];
    r.near_critical = r.near_critical || near[i];
  }
  return r;
}

void write_sample_csv(std::ostream& os, const MeasureSample& sample) {
  os << "index,re,im,chart\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < sample.points.size(); ++i) {
    const HVec& h = sample.points[i].lift();
    Complex v;
    int chart;
    if (std::abs(h[1]) >= std::abs(h[0])) {
      v = h[0] / h[1];
      chart = 1;
    } else {
      v = h[1] / h[0];
      chart = 0;
    }
    os << i << ',' << v.real() << ',' << v.imag() << ',' << chart << '\n';
  }
}

}  // namespace stablab
