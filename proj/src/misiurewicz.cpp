#include "stablab/misiurewicz.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "stablab/parallel.hpp"
#include "stablab/rng.hpp"

namespace stablab {

namespace {

constexpr double kAffineLimit = 1e8;
constexpr double kCriticalStep = 1e-6;

struct Step {
  Complex value;
  Complex dz;
  Complex dlambda;
};

Step affine_step(const FrozenMap& map, Complex z) {
  Mat3 jac{};
  const HVec X(z, 1.0);
  const HVec F = map.lift(X, jac);
  const HVec dF = map.dlambda(X);
  const Complex inv = 1.0 / F[1];
  const Complex value = F[0] * inv;
  return {value, (jac[0][0] - value * jac[1][0]) * inv, (dF[0] - value * dF[1]) * inv};
}

bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()) && std::abs(z) < kAffineLimit; }

std::vector<Complex> finite_criticals(const FrozenMap& map) {
  std::vector<Complex> out;
  for (const auto& cp : critical_points(map)) {
    const Complex c = cp.point.affine_value();
    if (finite(c)) out.push_back(c);
  }
  return out;
}

bool nearest(const std::vector<Complex>& pts, Complex guess, Complex& out) {
  if (pts.empty()) return false;
  out = *std::min_element(pts.begin(), pts.end(),
                          [&](Complex a, Complex b) { return std::abs(a - guess) < std::abs(b - guess); });
  return true;
}

struct Cycle {
  bool ok = false;
  Complex w;
  Complex dw;          // dw / dlambda
  Complex multiplier;
};

Cycle continue_cycle(const FrozenMap& map, Complex guess, int p) {
  Cycle out;
  Complex w = guess;
  for (int it = 0; it < 40; ++it) {
    Complex x = w, dxw = 1.0, dxl = 0.0;
    for (int i = 0; i < p; ++i) {
      const Step s = affine_step(map, x);
      dxw *= s.dz;
      dxl = s.dz * dxl + s.dlambda;
      x = s.value;
    }
    if (!finite(x)) return out;
    const Complex step = (x - w) / (dxw - 1.0);
    w -= step;
    if (!finite(w)) return out;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(w))) {
      out.ok = true;
      out.w = w;
      out.multiplier = dxw;
      out.dw = -dxl / (dxw - 1.0);
      return out;
    }
  }
  return out;
}

}  // namespace

CollisionValue collision_value(const FamilySpec& family, Complex lambda, Complex critical_guess, Complex cycle_guess,
                               int q, int p) {
  CollisionValue out;
  const FrozenMap map(family, lambda);
  Complex c, c_plus, c_minus;
  if (!nearest(finite_criticals(map), critical_guess, c)) return out;
  if (!nearest(finite_criticals(FrozenMap(family, lambda + kCriticalStep)), c, c_plus)) return out;
  if (!nearest(finite_criticals(FrozenMap(family, lambda - kCriticalStep)), c, c_minus)) return out;
  const Cycle cyc = continue_cycle(map, cycle_guess, p);
  if (!cyc.ok) return out;

  Complex x = c, dx = (c_plus - c_minus) / (2.0 * kCriticalStep);
  for (int i = 0; i < q; ++i) {
    const Step s = affine_step(map, x);
    dx = s.dz * dx + s.dlambda;
    x = s.value;
  }
  if (!finite(x)) return out;
  out.ok = true;
  out.c = c;
  out.w = cyc.w;
  out.multiplier = cyc.multiplier;
  out.h = x - cyc.w;
  out.dh = dx - cyc.dw;
  return out;
}

std::vector<MisiurewiczHit> find_misiurewicz(const FamilySpec& family, const Rect& rect, int q, int p, int n_starts,
                                             std::uint64_t seed, const MisiurewiczOptions& opts) {
  family.validate();
  if (family.k != 1) throw LabError(ErrorKind::InvalidArgument, "Misiurewicz detection is implemented for k = 1");
  if (q < 1 || p < 1 || n_starts < 1)
    throw LabError(ErrorKind::InvalidArgument, "q, p and n_starts must be positive");

  std::vector<std::vector<MisiurewiczHit>> per_start(static_cast<std::size_t>(n_starts));
  parallel_for(per_start.size(), [&](std::size_t i) {
    Rng rng(seed, Stream::Starts, i);
    const double re = rng.uniform(rect.re_min, rect.re_max);
    const Complex start{re, rng.uniform(rect.im_min, rect.im_max)};
    const FrozenMap map(family, start);
    std::vector<Complex> cycle_points;
    try {
      for (const auto& cyc : repelling_cycles(map, p).cycles)
        if (cyc.period == p)
          for (const auto& pt : cyc.points)
            if (finite(pt.affine_value())) cycle_points.push_back(pt.affine_value());
    } catch (const LabError&) {
      return;
    }
    for (Complex c0 : finite_criticals(map)) {
      for (Complex w0 : cycle_points) {
        Complex lambda = start, c = c0, w = w0;
        CollisionValue v;
        bool converged = false;
        for (int it = 0; it < opts.max_newton; ++it) {
          v = collision_value(family, lambda, c, w, q, p);
          if (!v.ok || std::abs(v.multiplier) <= 1.0 || v.dh == Complex{}) break;
          c = v.c;
          w = v.w;
          Complex step = v.h / v.dh;
          if (std::abs(step) > 0.5) step *= 0.5 / std::abs(step);
          lambda -= step;
          if (!finite(lambda)) break;
          if (std::abs(step) <= 1e-14 * (1.0 + std::abs(lambda))) {
            converged = true;
            break;
          }
        }
        if (!converged || !rect.contains(lambda)) continue;
        v = collision_value(family, lambda, c, w, q, p);
        if (!v.ok) continue;
        MisiurewiczHit hit;
        hit.lambda = lambda;
        hit.q = q;
        hit.p = p;
        hit.residual = std::abs(v.h);
        hit.transversality = std::abs(v.dh);
        hit.multiplier_modulus = std::abs(v.multiplier);
        hit.critical_point = v.c;
        hit.cycle_point = v.w;
        hit.start = static_cast<int>(i);
        if (hit.residual < opts.residual_tol && hit.transversality > opts.transversality_tol &&
            hit.multiplier_modulus > 1.0)
          per_start[i].push_back(hit);
      }
    }
  });

  std::vector<MisiurewiczHit> hits;
  for (const auto& list : per_start)
    for (const auto& h : list) {
      auto same = std::find_if(hits.begin(), hits.end(), [&](const MisiurewiczHit& o) {
        return std::abs(o.lambda - h.lambda) < opts.dedupe_tol;
      });
      if (same == hits.end())
        hits.push_back(h);
      else if (h.residual < same->residual)
        *same = h;
    }
  std::sort(hits.begin(), hits.end(), [](const MisiurewiczHit& a, const MisiurewiczHit& b) {
    if (a.lambda.real() != b.lambda.real()) return a.lambda.real() < b.lambda.real();
    return a.lambda.imag() < b.lambda.imag();
  });
  return hits;
}

double laplacian_mass_near(Complex point, const LyapunovRaster& raster, double radius_cells) {
  const ParamGrid& g = raster.grid;
  if (!g.rect.contains(point))
    throw LabError(ErrorKind::OutOfRaster, "point lies outside the raster");
  const double fx = (point.real() - g.rect.re_min) / g.dx() - 0.5;
  const double fy = (point.imag() - g.rect.im_min) / g.dy() - 0.5;
  const int r = static_cast<int>(std::ceil(radius_cells)) + 1;
  double mass = 0.0;
  for (int iy = std::max(0, static_cast<int>(fy) - r); iy <= std::min(g.ny - 1, static_cast<int>(fy) + r); ++iy)
    for (int ix = std::max(0, static_cast<int>(fx) - r); ix <= std::min(g.nx - 1, static_cast<int>(fx) + r); ++ix) {
      if (std::hypot(ix - fx, iy - fy) > radius_cells) continue;
      const double m = raster.laplacian[g.index(ix, iy)];
      if (std::isfinite(m)) mass += std::abs(m);
    }
  return mass;
}

std::vector<bool> check_in_bifurcation(const std::vector<Complex>& points, const LyapunovRaster& raster,
                                       double radius_cells, double tau) {
  std::vector<bool> out;
  for (Complex z : points) out.push_back(laplacian_mass_near(z, raster, radius_cells) > tau);
  return out;
}

std::vector<bool> check_in_bifurcation(const std::vector<MisiurewiczHit>& hits, const LyapunovRaster& raster,
                                       double radius_cells, double tau) {
  std::vector<Complex> pts;
  for (const auto& h : hits) pts.push_back(h.lambda);
  return check_in_bifurcation(pts, raster, radius_cells, tau);
}

void write_hits_csv(std::ostream& os, const std::vector<MisiurewiczHit>& hits) {
  os << "re,im,q,p,residual,transversality,multiplier_modulus,cycle_re,cycle_im\n";
  os << std::setprecision(17);
  for (const auto& h : hits)
    os << h.lambda.real() << ',' << h.lambda.imag() << ',' << h.q << ',' << h.p << ',' << h.residual << ','
       << h.transversality << ',' << h.multiplier_modulus << ',' << h.cycle_point.real() << ','
       << h.cycle_point.imag() << '\n';
}

}  // namespace stablab
