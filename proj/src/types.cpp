#include "stablab/types.hpp"

#include <algorithm>
#include <limits>

namespace stablab {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateParameter: return "degenerate_parameter";
    case ErrorKind::ChartFailure: return "chart_failure";
    case ErrorKind::Collision: return "collision";
    case ErrorKind::RootFinding: return "root_finding";
    case ErrorKind::RootBudget: return "root_budget";
    case ErrorKind::NotPolynomial: return "not_polynomial";
    case ErrorKind::ExtensionFailure: return "extension_failure";
    case ErrorKind::LevelBudget: return "level_budget";
    case ErrorKind::NoClearPoint: return "no_clear_point";
    case ErrorKind::OutOfRaster: return "out_of_raster";
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Config: return "config";
    case ErrorKind::FailureBudget: return "failure_budget";
  }
  return "unknown";
}

double wedge_norm(const HVec& u, const HVec& v) {
  double s = 0.0;
  for (int i = 0; i < u.n; ++i)
    for (int j = i + 1; j < u.n; ++j) s += std::norm(u[i] * v[j] - u[j] * v[i]);
  return std::sqrt(s);
}

double fs_distance(const HVec& u, const HVec& v) {
  // Scale first so that tiny or huge lifts do not underflow the products.
  double mu = 0.0, mv = 0.0;
  for (int i = 0; i < u.n; ++i) mu = std::max({mu, std::abs(u[i].real()), std::abs(u[i].imag())});
  for (int i = 0; i < v.n; ++i) mv = std::max({mv, std::abs(v[i].real()), std::abs(v[i].imag())});
  if (mu == 0.0 || mv == 0.0) return 1.0;
  const HVec a = u.scaled(1.0 / mu), b = v.scaled(1.0 / mv);
  const double d = wedge_norm(a, b) / std::sqrt(a.norm2() * b.norm2());
  return std::min(1.0, d);
}

double fs_speed(const HVec& g, const HVec& dg) {
  const double m = g.max_norm();
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  const HVec a = g.scaled(1.0 / m), b = dg.scaled(1.0 / m);
  return wedge_norm(a, b) / a.norm2();
}

ProjPoint::ProjPoint(const HVec& h) : h_(h) {
  int best = 0;
  double m = -1.0;
  for (int i = 0; i < h.n; ++i) {
    if (std::abs(h[i]) > m) {
      m = std::abs(h[i]);
      best = i;
    }
  }
  if (m == 0.0 || !std::isfinite(m))
    throw LabError(ErrorKind::DegenerateParameter, "projective point with zero or non-finite lift");
  const Complex s = 1.0 / h[best];
  h_ = h.scaled(s);
  h_[best] = Complex{1.0, 0.0};
}

Complex ProjPoint::affine_value() const {
  const Complex last = h_[h_.n - 1];
  if (last == Complex{}) {
    const double inf = std::numeric_limits<double>::infinity();
    return {inf, inf};
  }
  return h_[0] / last;
}

double fs_distance(const ProjPoint& a, const ProjPoint& b) { return fs_distance(a.lift(), b.lift()); }

}  // namespace stablab
