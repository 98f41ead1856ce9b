#include "stablab/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "stablab/roots.hpp"

namespace stablab {

namespace {

std::string describe(Complex z) {
  std::ostringstream os;
  os << "(" << z.real() << (z.imag() < 0 ? "" : "+") << z.imag() << "i)";
  return os.str();
}

void eval_lambda_poly(const std::vector<Complex>& p, Complex lambda, Complex& v, Complex& dv) {
  v = Complex{};
  dv = Complex{};
  for (std::size_t i = p.size(); i-- > 0;) {
    dv = dv * lambda + v;
    v = v * lambda + p[i];
  }
}

int monomial_index(const std::vector<std::array<int, 3>>& mons, std::array<int, 3> e) {
  for (std::size_t i = 0; i < mons.size(); ++i)
    if (mons[i] == e) return static_cast<int>(i);
  return -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// FamilySpec

std::vector<std::array<int, 3>> FamilySpec::monomials(int k, int d) {
  std::vector<std::array<int, 3>> out;
  if (k == 1) {
    for (int m = 0; m <= d; ++m) out.push_back({d - m, m, 0});
  } else {
    for (int a0 = d; a0 >= 0; --a0)
      for (int a1 = d - a0; a1 >= 0; --a1) out.push_back({a0, a1, d - a0 - a1});
  }
  return out;
}

FamilySpec FamilySpec::polynomial(const std::vector<std::vector<Complex>>& affine) {
  if (affine.size() < 3)
    throw LabError(ErrorKind::InvalidArgument, "polynomial family needs degree >= 2");
  FamilySpec f;
  f.k = 1;
  f.d = static_cast<int>(affine.size()) - 1;
  const auto mons = monomials(1, f.d);
  f.coeffs.assign(2, std::vector<std::vector<Complex>>(mons.size(), std::vector<Complex>{Complex{}}));
  for (int j = 0; j <= f.d; ++j) {
    // z^j w^{d-j} is monomial m = d - j.
    auto c = affine[static_cast<std::size_t>(j)];
    if (c.empty()) c.push_back(Complex{});
    f.coeffs[0][static_cast<std::size_t>(f.d - j)] = c;
  }
  f.coeffs[1][static_cast<std::size_t>(f.d)] = {Complex{1.0}};
  return f;
}

FamilySpec FamilySpec::quadratic() {
  return polynomial({{Complex{0.0}, Complex{1.0}}, {Complex{0.0}}, {Complex{1.0}}});
}

FamilySpec FamilySpec::power(int d) {
  std::vector<std::vector<Complex>> a(static_cast<std::size_t>(d) + 1, {Complex{}});
  a.back() = {Complex{1.0}};
  return polynomial(a);
}

FamilySpec FamilySpec::skew_product(int d, const std::vector<std::vector<Complex>>& p,
                                    const std::vector<std::vector<std::vector<Complex>>>& q) {
  FamilySpec f;
  f.k = 2;
  f.d = d;
  const auto mons = monomials(2, d);
  f.coeffs.assign(3, std::vector<std::vector<Complex>>(mons.size(), std::vector<Complex>{Complex{}}));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int ii = static_cast<int>(i);
    if (ii > d) throw LabError(ErrorKind::InvalidArgument, "skew product p exceeds degree");
    if (!p[i].empty()) f.coeffs[0][static_cast<std::size_t>(monomial_index(mons, {ii, 0, d - ii}))] = p[i];
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = 0; j < q[i].size(); ++j) {
      const int ii = static_cast<int>(i), jj = static_cast<int>(j);
      if (ii + jj > d) throw LabError(ErrorKind::InvalidArgument, "skew product q exceeds degree");
      if (!q[i][j].empty())
        f.coeffs[1][static_cast<std::size_t>(monomial_index(mons, {ii, jj, d - ii - jj}))] = q[i][j];
    }
  }
  f.coeffs[2][static_cast<std::size_t>(monomial_index(mons, {0, 0, d}))] = {Complex{1.0}};
  return f;
}

void FamilySpec::validate() const {
  if (k != 1 && k != 2) throw LabError(ErrorKind::InvalidArgument, "phase dimension must be 1 or 2");
  if (d < 2 || d > 8) throw LabError(ErrorKind::InvalidArgument, "degree must lie in [2, 8]");
  const auto n = monomials(k, d).size();
  if (coeffs.size() != static_cast<std::size_t>(k + 1))
    throw LabError(ErrorKind::InvalidArgument, "expected k+1 lift components");
  for (const auto& comp : coeffs) {
    if (comp.size() != n)
      throw LabError(ErrorKind::InvalidArgument, "lift component has wrong number of monomials");
  }
  if (!(domain.re_min < domain.re_max && domain.im_min < domain.im_max))
    throw LabError(ErrorKind::InvalidArgument, "empty parameter domain");
}

bool FamilySpec::is_polynomial() const {
  if (k != 1) return false;
  auto zero = [](const std::vector<Complex>& p) {
    return std::all_of(p.begin(), p.end(), [](Complex c) { return c == Complex{}; });
  };
  for (int m = 0; m < d; ++m)
    if (!zero(coeffs[1][static_cast<std::size_t>(m)])) return false;
  return !zero(coeffs[1][static_cast<std::size_t>(d)]) && !zero(coeffs[0][0]);
}

void FamilySpec::require_in_domain(Complex lambda) const {
  if (!domain.contains(lambda, 1e-12))
    throw LabError(ErrorKind::InvalidArgument, "parameter " + describe(lambda) + " outside the family domain");
}

// ---------------------------------------------------------------------------
// FrozenMap

FrozenMap::FrozenMap(const FamilySpec& family, Complex lambda)
    : k_(family.k), d_(family.d), lambda_(lambda) {
  const auto mons = FamilySpec::monomials(k_, d_);
  terms_.resize(static_cast<std::size_t>(k_ + 1));
  for (int i = 0; i <= k_; ++i) {
    for (std::size_t m = 0; m < mons.size(); ++m) {
      Complex c, dc;
      eval_lambda_poly(family.coeffs[static_cast<std::size_t>(i)][m], lambda, c, dc);
      if (c == Complex{} && dc == Complex{}) continue;
      terms_[static_cast<std::size_t>(i)].push_back({mons[m], c, dc});
      scale_ += std::abs(c);
    }
  }
}

void FrozenMap::rescale(Complex s) {
  if (s == Complex{}) throw LabError(ErrorKind::InvalidArgument, "rescaling a lift by zero");
  scale_ = 0.0;
  for (auto& comp : terms_)
    for (auto& t : comp) {
      t.c *= s;
      t.dc *= s;
      scale_ += std::abs(t.c);
    }
}

HVec FrozenMap::lift(const HVec& z) const {
  std::array<std::array<Complex, 9>, 3> pw{};
  const int nv = k_ + 1;
  for (int v = 0; v < nv; ++v) {
    pw[v][0] = 1.0;
    for (int p = 1; p <= d_; ++p) pw[v][p] = pw[v][p - 1] * z[v];
  }
  HVec out;
  out.n = nv;
  for (int i = 0; i < nv; ++i) {
    Complex s{};
    for (const auto& t : terms_[static_cast<std::size_t>(i)]) {
      Complex m = t.c;
      for (int v = 0; v < nv; ++v) m *= pw[v][t.e[v]];
      s += m;
    }
    out[i] = s;
  }
  return out;
}

HVec FrozenMap::lift(const HVec& z, Mat3& jac) const {
  std::array<std::array<Complex, 9>, 3> pw{};
  const int nv = k_ + 1;
  for (int v = 0; v < nv; ++v) {
    pw[v][0] = 1.0;
    for (int p = 1; p <= d_; ++p) pw[v][p] = pw[v][p - 1] * z[v];
  }
  HVec out;
  out.n = nv;
  for (int i = 0; i < nv; ++i) {
    Complex s{};
    std::array<Complex, 3> g{};
    for (const auto& t : terms_[static_cast<std::size_t>(i)]) {
      Complex m = t.c;
      for (int v = 0; v < nv; ++v) m *= pw[v][t.e[v]];
      s += m;
      for (int j = 0; j < nv; ++j) {
        if (t.e[j] == 0) continue;
        Complex dm = t.c * static_cast<double>(t.e[j]) * pw[j][t.e[j] - 1];
        for (int v = 0; v < nv; ++v)
          if (v != j) dm *= pw[v][t.e[v]];
        g[j] += dm;
      }
    }
    out[i] = s;
    for (int j = 0; j < nv; ++j) jac[i][j] = g[j];
  }
  return out;
}

HVec FrozenMap::dlambda(const HVec& z) const {
  std::array<std::array<Complex, 9>, 3> pw{};
  const int nv = k_ + 1;
  for (int v = 0; v < nv; ++v) {
    pw[v][0] = 1.0;
    for (int p = 1; p <= d_; ++p) pw[v][p] = pw[v][p - 1] * z[v];
  }
  HVec out;
  out.n = nv;
  for (int i = 0; i < nv; ++i) {
    Complex s{};
    for (const auto& t : terms_[static_cast<std::size_t>(i)]) {
      Complex m = t.dc;
      for (int v = 0; v < nv; ++v) m *= pw[v][t.e[v]];
      s += m;
    }
    out[i] = s;
  }
  return out;
}

HVec FrozenMap::apply(const HVec& z, double& scale) const {
  const HVec f = lift(z);
  const double m = f.max_norm();
  const double zn = z.max_norm();
  if (!(m > 1e-13 * scale_ * std::pow(zn, d_)) || !std::isfinite(m))
    throw LabError(ErrorKind::DegenerateParameter,
                   "lift vanishes numerically at lambda = " + describe(lambda_));
  scale = m;
  return f.scaled(1.0 / m);
}

HVec FrozenMap::apply(const HVec& z) const {
  double s;
  return apply(z, s);
}

ProjPoint evaluate(const FamilySpec& family, Complex lambda, const ProjPoint& z) {
  family.require_in_domain(lambda);
  const FrozenMap map(family, lambda);
  return ProjPoint(map.apply(z.lift()));
}

// ---------------------------------------------------------------------------
// Derivatives

namespace {

int pick_chart(const HVec& h, int requested, const char* what) {
  const double m = h.max_norm();
  if (requested < 0) {
    int best = 0;
    for (int i = 1; i < h.n; ++i)
      if (std::abs(h[i]) > std::abs(h[best])) best = i;
    return best;
  }
  if (requested >= h.n) throw LabError(ErrorKind::ChartFailure, "chart index out of range");
  if (std::abs(h[requested]) < 1e-8 * m)
    throw LabError(ErrorKind::ChartFailure, std::string("affine chart does not keep the ") + what + " bounded");
  return requested;
}

}  // namespace

Derivative derivative(const FrozenMap& map, const ProjPoint& z, int src_chart, int dst_chart) {
  const int k = map.k();
  Derivative out;
  out.src_chart = pick_chart(z.lift(), src_chart, "source point");
  const HVec zh = z.lift().scaled(1.0 / z.lift()[out.src_chart]);
  Mat3 jac{};
  const HVec F = map.lift(zh, jac);
  const double fm = F.max_norm();
  if (!(fm > 1e-13 * map.coeff_scale() * std::pow(zh.max_norm(), map.d())))
    throw LabError(ErrorKind::DegenerateParameter, "lift vanishes numerically");
  out.dst_chart = pick_chart(F, dst_chart, "image point");
  const int o = out.dst_chart;
  const Complex Fo = F[o];
  const HVec dF = map.dlambda(zh);

  std::array<int, 2> src_idx{}, dst_idx{};
  for (int i = 0, s = 0, t = 0; i <= k; ++i) {
    if (i != out.src_chart) src_idx[s++] = i;
    if (i != o) dst_idx[t++] = i;
  }
  double xn2 = 0.0, yn2 = 0.0;
  std::array<Complex, 2> y{};
  for (int a = 0; a < k; ++a) {
    xn2 += std::norm(zh[src_idx[a]]);
    y[a] = F[dst_idx[a]] / Fo;
    yn2 += std::norm(y[a]);
  }
  std::array<std::array<Complex, 2>, 2> D{};
  for (int a = 0; a < k; ++a) {
    const int ia = dst_idx[a];
    for (int b = 0; b < k; ++b) {
      const int jb = src_idx[b];
      D[a][b] = (jac[ia][jb] * Fo - F[ia] * jac[o][jb]) / (Fo * Fo);
    }
    out.dlambda_affine[a] = (dF[ia] * Fo - F[ia] * dF[o]) / (Fo * Fo);
  }
  out.affine = (k == 1) ? D[0][0] : D[0][0] * D[1][1] - D[0][1] * D[1][0];
  const double factor = std::pow((1.0 + xn2) / (1.0 + yn2), 0.5 * (k + 1));
  out.jac = out.affine * factor;
  out.jac_abs = std::abs(out.jac);
  out.dlambda_fs = fs_speed(F, dF);
  return out;
}

Derivative derivative(const FamilySpec& family, Complex lambda, const ProjPoint& z, int src_chart,
                      int dst_chart) {
  family.require_in_domain(lambda);
  return derivative(FrozenMap(family, lambda), z, src_chart, dst_chart);
}

// ---------------------------------------------------------------------------
// Critical points

std::vector<Complex> critical_form(const FrozenMap& map) {
  if (map.k() != 1) throw LabError(ErrorKind::InvalidArgument, "critical form is implemented for k = 1");
  const int d = map.d();
  // Homogeneous coefficients indexed by the power of w.
  std::vector<Complex> A(static_cast<std::size_t>(d) + 1), B(static_cast<std::size_t>(d) + 1);
  // Coefficients of F_i(z, 1) as a polynomial in z: sample at d+1 roots of
  // unity and invert the DFT (exact for degree <= d).
  const int n = d + 1;
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<Complex> vals(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      const Complex w = std::polar(1.0, 2.0 * std::numbers::pi * j / n);
      vals[static_cast<std::size_t>(j)] = map.lift(HVec(w, Complex{1.0}))[comp];
    }
    auto& dst = comp == 0 ? A : B;
    for (int p = 0; p < n; ++p) {
      Complex s{};
      for (int j = 0; j < n; ++j) s += vals[static_cast<std::size_t>(j)] * std::polar(1.0, -2.0 * std::numbers::pi * j * p / n);
      // z^p w^{d-p} has w-power d - p.
      dst[static_cast<std::size_t>(d - p)] = s / static_cast<double>(n);
    }
  }
  auto dz = [d](const std::vector<Complex>& P) {
    std::vector<Complex> r(static_cast<std::size_t>(d));
    for (int m = 0; m < d; ++m) r[static_cast<std::size_t>(m)] = P[static_cast<std::size_t>(m)] * static_cast<double>(d - m);
    return r;
  };
  auto dw = [d](const std::vector<Complex>& P) {
    std::vector<Complex> r(static_cast<std::size_t>(d));
    for (int m = 1; m <= d; ++m) r[static_cast<std::size_t>(m - 1)] = P[static_cast<std::size_t>(m)] * static_cast<double>(m);
    return r;
  };
  auto mul = [](const std::vector<Complex>& a, const std::vector<Complex>& b) {
    std::vector<Complex> r(a.size() + b.size() - 1);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
  };
  const auto t1 = mul(dz(A), dw(B));
  const auto t2 = mul(dw(A), dz(B));
  std::vector<Complex> W(t1.size());
  for (std::size_t i = 0; i < W.size(); ++i) W[i] = t1[i] - t2[i];
  return W;
}

std::vector<CriticalPoint> critical_points(const FrozenMap& map, double cluster_tol) {
  const auto W = critical_form(map);
  const int D = static_cast<int>(W.size()) - 1;  // 2d - 2
  double scale = 0.0;
  for (auto c : W) scale = std::max(scale, std::abs(c));
  if (scale == 0.0)
    throw LabError(ErrorKind::DegenerateParameter, "critical form vanishes identically");
  // Leading zeros (in the power of w) are roots at infinity.
  int at_inf = 0;
  while (at_inf <= D && std::abs(W[static_cast<std::size_t>(at_inf)]) <= 1e-13 * scale) ++at_inf;
  std::vector<Complex> asc(static_cast<std::size_t>(D - at_inf) + 1);
  for (int p = 0; p <= D - at_inf; ++p) asc[static_cast<std::size_t>(p)] = W[static_cast<std::size_t>(D - p)];
  std::vector<HVec> pts;
  for (int i = 0; i < at_inf; ++i) pts.emplace_back(Complex{1.0}, Complex{0.0});
  if (asc.size() > 1) {
    for (auto x : polynomial_roots(asc, 1e-13)) pts.emplace_back(x, Complex{1.0});
  }
  // Clustering by FS distance, single linkage.
  const std::size_t n = pts.size();
  std::vector<int> label(n, -1);
  std::vector<CriticalPoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] >= 0) continue;
    const int id = static_cast<int>(out.size());
    label[i] = id;
    std::vector<std::size_t> members{i}, stack{i};
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (label[j] < 0 && fs_distance(pts[p], pts[j]) <= cluster_tol) {
          label[j] = id;
          members.push_back(j);
          stack.push_back(j);
        }
      }
    }
    // Representative: a member in the most trustworthy chart.
    HVec rep = pts[members.front()];
    Complex sum{};
    bool finite = true;
    for (auto m : members) {
      if (pts[m][1] == Complex{}) finite = false;
      else sum += pts[m][0] / pts[m][1];
    }
    if (finite) rep = HVec(sum / static_cast<double>(members.size()), Complex{1.0});
    out.push_back({ProjPoint(rep), static_cast<int>(members.size())});
  }
  return out;
}

const char* to_string(TrackKind kind) {
  switch (kind) {
    case TrackKind::CriticalMarking: return "critical_marking";
    case TrackKind::Postcritical: return "postcritical";
    case TrackKind::InverseBranch: return "inverse_branch";
    case TrackKind::RepellingPoint: return "repelling_point";
  }
  return "unknown";
}

double MotionTrack::max_step() const {
  double m = 0.0;
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      if (ix + 1 < grid.nx) m = std::max(m, fs_distance(at(ix, iy), at(ix + 1, iy)));
      if (iy + 1 < grid.ny) m = std::max(m, fs_distance(at(ix, iy), at(ix, iy + 1)));
    }
  return m;
}

// ---------------------------------------------------------------------------
// Critical markings

namespace {

struct MarkingState {
  std::vector<ProjPoint> values;
  std::vector<int> mult;
};

std::vector<int> sorted_multiplicities(const std::vector<CriticalPoint>& cps) {
  std::vector<int> m;
  for (const auto& c : cps) m.push_back(c.multiplicity);
  std::sort(m.begin(), m.end());
  return m;
}

// One continuation step; returns false when the match is ambiguous.
bool match_step(const FamilySpec& family, const MarkingState& from, Complex lambda,
                const MarkingOptions& opts, MarkingState& to) {
  const auto cps = critical_points(FrozenMap(family, lambda), opts.cluster_tol);
  auto want = from.mult;
  std::sort(want.begin(), want.end());
  if (sorted_multiplicities(cps) != want)
    throw LabError(ErrorKind::Collision,
                   "critical points collide near lambda = " + describe(lambda));
  const std::size_t n = from.values.size();
  to.values.assign(n, ProjPoint());
  to.mult = from.mult;
  std::vector<bool> used(cps.size(), false);
  for (std::size_t t = 0; t < n; ++t) {
    double best = std::numeric_limits<double>::infinity(), second = best;
    std::size_t arg = cps.size();
    for (std::size_t c = 0; c < cps.size(); ++c) {
      if (cps[c].multiplicity != from.mult[t]) continue;
      const double dist = fs_distance(from.values[t], cps[c].point);
      if (dist < best) {
        second = best;
        best = dist;
        arg = c;
      } else if (dist < second) {
        second = dist;
      }
    }
    if (arg == cps.size() || used[arg]) return false;
    if (std::isfinite(second) && best > opts.ambiguity * second) return false;
    used[arg] = true;
    to.values[t] = cps[arg].point;
  }
  return true;
}

MarkingState continue_to(const FamilySpec& family, const MarkingState& from, Complex l0, Complex l1,
                         const MarkingOptions& opts, int depth = 0) {
  MarkingState to;
  if (match_step(family, from, l1, opts, to)) return to;
  if (depth >= opts.max_halvings)
    throw LabError(ErrorKind::Collision,
                   "ambiguous critical continuation near lambda = " + describe(l1));
  const Complex mid = 0.5 * (l0 + l1);
  const MarkingState half = continue_to(family, from, l0, mid, opts, depth + 1);
  return continue_to(family, half, mid, l1, opts, depth + 1);
}

}  // namespace

std::vector<MotionTrack> critical_marking(const FamilySpec& family, const ParamGrid& grid,
                                          const MarkingOptions& opts) {
  if (family.k != 1) throw LabError(ErrorKind::InvalidArgument, "critical marking requires k = 1");
  const std::size_t N = grid.size();
  std::vector<MarkingState> states(N);
  {
    const Complex l0 = grid.at(0, 0);
    family.require_in_domain(l0);
    const auto cps = critical_points(FrozenMap(family, l0), opts.cluster_tol);
    for (const auto& c : cps) {
      states[0].values.push_back(c.point);
      states[0].mult.push_back(c.multiplicity);
    }
  }
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      if (ix == 0 && iy == 0) continue;
      const int px = ix == 0 ? 0 : ix - 1;
      const int py = ix == 0 ? iy - 1 : iy;
      const Complex l1 = grid.at(ix, iy);
      family.require_in_domain(l1);
      states[grid.index(ix, iy)] =
          continue_to(family, states[grid.index(px, py)], grid.at(px, py), l1, opts);
    }
  }
  std::vector<MotionTrack> tracks(states[0].values.size());
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    tracks[t].grid = grid;
    tracks[t].kind = TrackKind::CriticalMarking;
    tracks[t].multiplicity = states[0].mult[t];
    tracks[t].values.reserve(N);
    for (std::size_t i = 0; i < N; ++i) tracks[t].values.push_back(states[i].values[t]);
  }
  return tracks;
}

}  // namespace stablab

namespace stablab {

std::vector<ProjPoint> preimages(const FrozenMap& map, const ProjPoint& z) {
  if (map.k() != 1) throw LabError(ErrorKind::InvalidArgument, "preimages are implemented for k = 1");
  const HVec target = z.lift();
  auto form = [&](const HVec& w, Complex& val, HVec& grad) {
    Mat3 jac{};
    const HVec F = map.lift(w, jac);
    val = F[0] * target[1] - F[1] * target[0];
    grad = HVec(jac[0][0] * target[1] - jac[1][0] * target[0],
                jac[0][1] * target[1] - jac[1][1] * target[0]);
  };
  bool ok = true;
  const auto roots = projective_roots(map.d(), form, AberthOptions{}, &ok);
  std::vector<ProjPoint> out;
  out.reserve(roots.size());
  for (const auto& r : roots) {
    const ProjPoint p(r);
    // Residual check in the FS metric: the image must be z.
    if (!ok && fs_distance(map.apply(p.lift()), target) > 1e-8)
      throw LabError(ErrorKind::RootFinding, "fiber equation did not converge");
    out.push_back(p);
  }
  return out;
}

}  // namespace stablab
