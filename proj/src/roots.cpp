#include "stablab/roots.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stablab {

bool AberthResult::all_converged() const {
  return std::all_of(converged.begin(), converged.end(), [](bool b) { return b; });
}

AberthResult aberth(int degree, const std::function<Complex(Complex)>& newton_ratio,
                    const AberthOptions& opts) {
  AberthResult res;
  if (degree <= 0) return res;
  const auto n = static_cast<std::size_t>(degree);
  res.roots.resize(n);
  res.converged.assign(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    // Slightly varying radii break the symmetry of symmetric problems.
    const double r = opts.init_radius * (1.0 + 0.05 * std::sin(1.7 * static_cast<double>(k)));
    const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / degree + opts.init_phase;
    res.roots[k] = std::polar(r, th);
  }
  std::size_t active = n;
  int it = 0;
  for (; it < opts.max_iter && active > 0; ++it) {
    for (std::size_t k = 0; k < n; ++k) {
      if (res.converged[k]) continue;
      const Complex xk = res.roots[k];
      Complex ratio = newton_ratio(xk);
      if (!std::isfinite(ratio.real()) || !std::isfinite(ratio.imag())) {
        res.roots[k] = xk * Complex(1.0, 1e-3) + Complex(1e-6, 0.0);
        continue;
      }
      Complex s{};
      for (std::size_t j = 0; j < n; ++j) {
        if (j == k) continue;
        const Complex diff = xk - res.roots[j];
        if (diff != Complex{}) s += 1.0 / diff;
      }
      const Complex denom = 1.0 - ratio * s;
      const Complex w = (std::abs(denom) > 1e-300) ? ratio / denom : ratio;
      res.roots[k] = xk - w;
      if (std::abs(w) <= opts.tol * (1.0 + std::abs(res.roots[k]))) {
        res.converged[k] = true;
        --active;
      }
    }
  }
  res.iterations = it;
  return res;
}

Complex horner(std::span<const Complex> a, Complex x) {
  Complex p{};
  for (std::size_t i = a.size(); i-- > 0;) p = p * x + a[i];
  return p;
}

std::vector<Complex> polynomial_roots(std::span<const Complex> ascending, double zero_tol) {
  double scale = 0.0;
  for (auto c : ascending) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) throw LabError(ErrorKind::RootFinding, "zero polynomial has no isolated roots");
  const double thr = zero_tol * scale;
  std::size_t hi = ascending.size();
  while (hi > 0 && std::abs(ascending[hi - 1]) <= thr) --hi;
  std::size_t lo = 0;
  while (lo < hi && std::abs(ascending[lo]) <= thr) ++lo;
  std::vector<Complex> roots(lo, Complex{});
  if (hi - lo <= 1) return roots;
  std::vector<Complex> a(ascending.begin() + static_cast<std::ptrdiff_t>(lo),
                         ascending.begin() + static_cast<std::ptrdiff_t>(hi));
  const int deg = static_cast<int>(a.size()) - 1;
  if (deg == 1) {
    roots.push_back(-a[0] / a[1]);
    return roots;
  }
  std::vector<Complex> da(a.size() - 1);
  for (std::size_t i = 1; i < a.size(); ++i) da[i - 1] = a[i] * static_cast<double>(i);
  AberthOptions opts;
  opts.init_radius = std::pow(std::abs(a.front() / a.back()), 1.0 / deg);
  auto ratio = [&](Complex x) { return horner(a, x) / horner(da, x); };
  auto res = aberth(deg, ratio, opts);
  // Multiple roots converge linearly; accept them after polishing.
  for (auto& x : res.roots) {
    for (int i = 0; i < 3; ++i) {
      const Complex d = horner(da, x);
      if (d == Complex{}) break;
      const Complex step = horner(a, x) / d;
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) break;
      x -= step;
    }
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
      throw LabError(ErrorKind::RootFinding, "polynomial root iteration diverged");
  }
  roots.insert(roots.end(), res.roots.begin(), res.roots.end());
  return roots;
}

double chordal(Complex a, Complex b) {
  return std::abs(a - b) / std::sqrt((1.0 + std::norm(a)) * (1.0 + std::norm(b)));
}

std::vector<RootCluster> cluster_roots(std::span<const Complex> roots, double tol) {
  const std::size_t n = roots.size();
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] >= 0) continue;
    label[i] = next;
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (label[j] < 0 && chordal(roots[p], roots[j]) <= tol) {
          label[j] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }
  std::vector<RootCluster> out(static_cast<std::size_t>(next), RootCluster{Complex{}, 0});
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = out[static_cast<std::size_t>(label[i])];
    c.value += roots[i];
    c.multiplicity += 1;
  }
  for (auto& c : out) c.value /= static_cast<double>(c.multiplicity);
  return out;
}

HVec ChartRotation::apply(Complex x) const {
  // U = [[a, -conj(b)], [b, conj(a)]], |a|^2 + |b|^2 = 1.
  return HVec(a * x - std::conj(b), b * x + std::conj(a));
}

HVec ChartRotation::direction() const { return HVec(a, b); }

Complex ChartRotation::inverse(const HVec& z) const {
  // U^{-1} = U^*; the chart coordinate is the ratio of the first to second entry.
  const Complex u0 = std::conj(a) * z[0] + std::conj(b) * z[1];
  const Complex u1 = -b * z[0] + a * z[1];
  return u0 / u1;
}

std::vector<HVec> projective_roots(int degree,
                                   const std::function<void(const HVec&, Complex&, HVec&)>& form,
                                   const AberthOptions& opts, bool* all_converged) {
  const ChartRotation rot;
  const HVec dir = rot.direction();
  auto ratio = [&](Complex x) {
    Complex val;
    HVec grad;
    form(rot.apply(x), val, grad);
    const Complex dval = grad[0] * dir[0] + grad[1] * dir[1];
    return val / dval;
  };
  auto res = aberth(degree, ratio, opts);
  if (all_converged) *all_converged = res.all_converged();
  std::vector<HVec> out;
  out.reserve(res.roots.size());
  for (auto x : res.roots) {
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
      throw LabError(ErrorKind::RootFinding, "projective root iteration diverged");
    out.push_back(rot.apply(x));
  }
  return out;
}

}  // namespace stablab
