#include "stablab/postcritical.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>

#include "stablab/parallel.hpp"
#include "stablab/rng.hpp"
#include "stablab/roots.hpp"
#include "stablab/stats.hpp"

namespace stablab {

ParamRegion ParamRegion::box(const Rect& r) {
  ParamRegion p;
  p.shape = Shape::Rect;
  p.rect = r;
  p.center = r.center();
  return p;
}

ParamRegion ParamRegion::disc(Complex c, double r) {
  ParamRegion p;
  p.shape = Shape::Disc;
  p.center = c;
  p.radius = r;
  p.rect = {c.real() - r, c.real() + r, c.imag() - r, c.imag() + r};
  return p;
}

bool ParamRegion::contains(Complex lambda) const {
  if (shape == Shape::Disc) return std::abs(lambda - center) < radius;
  return rect.contains(lambda);
}

Rect ParamRegion::bounds() const { return rect; }

double ParamRegion::area() const {
  if (shape == Shape::Disc) return std::numbers::pi * radius * radius;
  return rect.width() * rect.height();
}

bool PhaseRegion::contains(const ProjPoint& z) const {
  if (whole) return true;
  const HVec& h = z.lift();
  // |z0/z1 - c| < r without dividing by a small z1.
  return std::abs(h[0] - center * h[1]) < radius * std::abs(h[1]);
}

// ---------------------------------------------------------------------------
// Adaptive midpoint quadrature

namespace {

struct PointEval {
  std::vector<double> integrand;  // per slot, weight * [in B] * (1 + speed^2)
  std::vector<double> speed2;     // per slot, weight * speed^2 (refinement metric)
};

PointEval eval_point(const TrackFn& tracks, int n_slots, const Window& w, Complex lambda) {
  PointEval e;
  e.integrand.assign(static_cast<std::size_t>(n_slots), 0.0);
  e.speed2.assign(static_cast<std::size_t>(n_slots), 0.0);
  if (!w.U.contains(lambda)) return e;
  for (const auto& s : tracks(lambda)) {
    if (s.slot < 0 || s.slot >= n_slots) throw LabError(ErrorKind::InvalidArgument, "track slot out of range");
    const double v2 = s.speed * s.speed;
    e.speed2[static_cast<std::size_t>(s.slot)] += s.weight * v2;
    if (w.B.contains(s.point)) e.integrand[static_cast<std::size_t>(s.slot)] += s.weight * (1.0 + v2);
  }
  return e;
}

bool differs(const std::vector<double>& a, const std::vector<double>& b, const QuadratureOptions& o) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = std::max(a[i], b[i]);
    if (m > o.floor && std::abs(a[i] - b[i]) > o.variation * m) return true;
  }
  return false;
}

struct CellResult {
  std::vector<std::vector<double>> pieces;  // per slot, contributions in a fixed order
  long long evaluations = 0;
  bool under_resolved = false;
};

void refine(const TrackFn& tracks, int n_slots, const Window& w, const QuadratureOptions& o, double x0,
            double y0, double hx, double hy, int level, CellResult& out) {
  const double sx = hx / 2, sy = hy / 2;
  std::array<PointEval, 4> sub;
  for (int k = 0; k < 4; ++k) {
    const Complex c{x0 + (k % 2 + 0.5) * sx, y0 + (k / 2 + 0.5) * sy};
    sub[static_cast<std::size_t>(k)] = eval_point(tracks, n_slots, w, c);
  }
  out.evaluations += 4;
  bool varies = false;
  for (int a = 0; a < 4 && !varies; ++a)
    for (int b = a + 1; b < 4 && !varies; ++b) varies = differs(sub[a].speed2, sub[b].speed2, o);
  for (int k = 0; k < 4; ++k) {
    const double cx = x0 + (k % 2) * sx, cy = y0 + (k / 2) * sy;
    if (varies && level < o.max_level) {
      refine(tracks, n_slots, w, o, cx, cy, sx, sy, level + 1, out);
    } else {
      if (varies) out.under_resolved = true;
      for (int s = 0; s < n_slots; ++s)
        out.pieces[static_cast<std::size_t>(s)].push_back(sub[static_cast<std::size_t>(k)].integrand[static_cast<std::size_t>(s)] * sx * sy);
    }
  }
}

}  // namespace

GraphMasses graph_masses(const TrackFn& tracks, int n_slots, const Window& window, const QuadratureOptions& opts) {
  if (opts.base < 1 || opts.max_level < 0) throw LabError(ErrorKind::InvalidArgument, "bad quadrature options");
  const Rect box = window.U.bounds();
  const ParamGrid grid{box, opts.base, opts.base};
  std::vector<PointEval> base(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) { base[i] = eval_point(tracks, n_slots, window, grid.at(i)); });

  std::vector<CellResult> cells(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    const int ix = static_cast<int>(i % grid.nx), iy = static_cast<int>(i / grid.nx);
    CellResult& r = cells[i];
    r.pieces.assign(static_cast<std::size_t>(n_slots), {});
    bool flag = false;
    const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& o : nb) {
      const int jx = ix + o[0], jy = iy + o[1];
      if (jx < 0 || jy < 0 || jx >= grid.nx || jy >= grid.ny) continue;
      flag = flag || differs(base[i].speed2, base[grid.index(jx, jy)].speed2, opts);
    }
    if (flag && opts.max_level > 0) {
      refine(tracks, n_slots, window, opts, box.re_min + ix * grid.dx(), box.im_min + iy * grid.dy(), grid.dx(),
             grid.dy(), 1, r);
    } else {
      if (flag) r.under_resolved = true;
      for (int s = 0; s < n_slots; ++s)
        r.pieces[static_cast<std::size_t>(s)].push_back(base[i].integrand[static_cast<std::size_t>(s)] * grid.cell_area());
    }
  });

  GraphMasses out;
  out.masses.assign(static_cast<std::size_t>(n_slots), 0.0);
  out.evaluations = static_cast<long long>(grid.size());
  for (int s = 0; s < n_slots; ++s) {
    std::vector<double> all;
    for (const auto& c : cells) {
      const auto& p = c.pieces[static_cast<std::size_t>(s)];
      all.insert(all.end(), p.begin(), p.end());
    }
    out.masses[static_cast<std::size_t>(s)] = pairwise_sum(all);
  }
  for (const auto& c : cells) {
    out.evaluations += c.evaluations;
    out.under_resolved = out.under_resolved || c.under_resolved;
  }
  return out;
}

double graph_mass(const MotionTrack& track, const Window& window, bool* under_resolved) {
  const ParamGrid& g = track.grid;
  if (track.values.size() != g.size()) throw LabError(ErrorKind::InvalidArgument, "track does not match its grid");
  std::vector<double> speed2(g.size(), 0.0);
  auto diff = [&](int ax, int ay, int bx, int by, double h) {
    return fs_distance(track.at(ax, ay), track.at(bx, by)) / h;
  };
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      double sx = 0.0, sy = 0.0;
      int terms = 0;
      if (g.nx > 1) {
        const int a = std::max(ix - 1, 0), b = std::min(ix + 1, g.nx - 1);
        sx = diff(a, iy, b, iy, (b - a) * g.dx());
        ++terms;
      }
      if (g.ny > 1) {
        const int a = std::max(iy - 1, 0), b = std::min(iy + 1, g.ny - 1);
        sy = diff(ix, a, ix, b, (b - a) * g.dy());
        ++terms;
      }
      speed2[g.index(ix, iy)] = terms ? (sx * sx + sy * sy) / terms : 0.0;
    }
  bool coarse = false;
  std::vector<double> pieces;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const std::size_t i = g.index(ix, iy);
      if (ix + 1 < g.nx) {
        const double a = speed2[i], b = speed2[g.index(ix + 1, iy)], m = std::max(a, b);
        coarse = coarse || (m > 0.01 && std::abs(a - b) > 0.5 * m);
      }
      if (iy + 1 < g.ny) {
        const double a = speed2[i], b = speed2[g.index(ix, iy + 1)], m = std::max(a, b);
        coarse = coarse || (m > 0.01 && std::abs(a - b) > 0.5 * m);
      }
      if (!window.U.contains(g.at(ix, iy)) || !window.B.contains(track.values[i])) continue;
      pieces.push_back(track.multiplicity * (1.0 + speed2[i]) * g.cell_area());
    }
  if (under_resolved) *under_resolved = coarse;
  return pairwise_sum(pieces);
}

// ---------------------------------------------------------------------------
// Post-critical tracks

namespace {

constexpr double kCritStep = 1e-5;

// FS speed of the critical point c(lambda) by a central difference.
double critical_speed(const FamilySpec& family, Complex lambda, const ProjPoint& c) {
  auto nearest = [&](Complex l) {
    const auto cps = critical_points(FrozenMap(family, l));
    const ProjPoint* best = nullptr;
    double bd = std::numeric_limits<double>::infinity();
    for (const auto& p : cps) {
      const double dist = fs_distance(p.point, c);
      if (dist < bd) {
        bd = dist;
        best = &p.point;
      }
    }
    return *best;
  };
  const ProjPoint a = nearest(lambda + kCritStep), b = nearest(lambda - kCritStep);
  return fs_distance(a, b) / (2.0 * kCritStep);
}

}  // namespace

// ---------------------------------------------------------------------------
// Contour form of the speed integral
//
// For a holomorphic lift g of a track, |gamma'|^2_FS dA = (1/4) Laplacian of
// log|g|^2, so its integral over U is a flux through the boundary. A phase
// disc B is a spherical cap; omega restricted to B equals a * omega plus the
// Laplacian of an explicit radial potential h, a = area(B) / area(P^1).

namespace {

struct GaussLegendre {
  static constexpr int kN = 16;
  std::array<double, kN> x{}, w{};
  GaussLegendre() {
    for (int i = 0; i < kN; ++i) {
      double t = std::cos(std::numbers::pi * (i + 0.75) / (kN + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = t;
        for (int k = 2; k <= kN; ++k) {
          const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = kN * (t * p1 - p0) / (t * t - 1.0);
        const double step = p1 / dp;
        t -= step;
        if (std::abs(step) < 1e-16) break;
      }
      x[static_cast<std::size_t>(i)] = t;
      w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
  }
};

const GaussLegendre& gauss() {
  static const GaussLegendre g;
  return g;
}

struct CapPotential {
  bool whole = true;
  Complex w;       // Moebius centre: u = (z - w) / (1 + conj(w) z) maps B to |u| < R
  double R = 0.0;
  double a = 1.0;  // FS area of B over the area of P^1

  explicit CapPotential(const PhaseRegion& B) {
    if (B.whole) return;
    whole = false;
    const double m = std::abs(B.center), rho = B.radius;
    if (m < 1e-14) {
      R = rho;
    } else {
      const Complex e = B.center / m;
      const double p1 = m + rho, p2 = m - rho, S = 2.0 * m, P = p1 * p2;
      const double disc = std::sqrt((P - 1.0) * (P - 1.0) + S * S);
      bool found = false;
      for (double t : {((P - 1.0) + disc) / S, ((P - 1.0) - disc) / S}) {
        const double r = std::abs((p1 - t) / (1.0 + t * p1));
        const double uc = std::abs((m - t) / (1.0 + t * m));
        if (std::isfinite(r) && uc < r) {
          w = t * e;
          R = r;
          found = true;
          break;
        }
      }
      if (!found) throw LabError(ErrorKind::InvalidArgument, "phase disc has no spherical centre");
    }
    a = R * R / (1.0 + R * R);
  }

  // d/dlambda of h(gamma(lambda)) for the lift g with derivative gp.
  Complex dpotential(const HVec& g, const HVec& gp) const {
    if (whole) return {};
    const Complex v0 = g[0] - w * g[1], v1 = std::conj(w) * g[0] + g[1];
    const Complex d0 = gp[0] - w * gp[1], d1 = std::conj(w) * gp[0] + gp[1];
    const Complex W = d0 * v1 - v0 * d1;
    const double nv = std::norm(v0) + std::norm(v1);
    if (std::abs(v0) < R * std::abs(v1)) return (1.0 - a) * std::conj(v0) * W / (nv * v1);
    return a * std::conj(v1) * W / (nv * v0);
  }
};

// d/dlambda of log|g|^2 for a holomorphic lift.
Complex dlog_norm(const HVec& g, const HVec& gp) {
  Complex num{};
  double den = 0.0;
  for (int i = 0; i < g.n; ++i) {
    num += std::conj(g[i]) * gp[i];
    den += std::norm(g[i]);
  }
  return num / den;
}

constexpr double kChartStep = 1e-6;

// Critical points in a rotated chart with their chart velocities.
struct MovingCritical {
  Complex x, dx;
  int multiplicity;
};

std::vector<MovingCritical> moving_criticals(const FamilySpec& family, Complex lambda, const ChartRotation& rot) {
  const auto here = critical_points(FrozenMap(family, lambda));
  const double h = kChartStep * std::max(1.0, std::abs(lambda));
  const auto plus = critical_points(FrozenMap(family, lambda + h));
  const auto minus = critical_points(FrozenMap(family, lambda - h));
  auto nearest = [&](const std::vector<CriticalPoint>& set, const ProjPoint& c) {
    const ProjPoint* best = nullptr;
    double bd = std::numeric_limits<double>::infinity();
    for (const auto& p : set) {
      const double dist = fs_distance(p.point, c);
      if (dist < bd) {
        bd = dist;
        best = &p.point;
      }
    }
    return rot.inverse(best->lift());
  };
  std::vector<MovingCritical> out;
  for (const auto& c : here) {
    const Complex dx = (nearest(plus, c.point) - nearest(minus, c.point)) / (2.0 * h);
    out.push_back({rot.inverse(c.point.lift()), dx, c.multiplicity});
  }
  return out;
}

// Per slot, sum over critical points of d/dlambda (a log|g_n|^2 + h(g_n)).
std::vector<Complex> flux_density(const FamilySpec& family, Complex lambda, int n_min, int n_max,
                                  const CapPotential& cap) {
  family.require_in_domain(lambda);
  const FrozenMap map(family, lambda);
  const ChartRotation rot;
  std::vector<Complex> out(static_cast<std::size_t>(n_max - n_min + 1));
  for (const auto& mc : moving_criticals(family, lambda, rot)) {
    HVec g = rot.apply(mc.x);
    HVec gp = rot.direction().scaled(mc.dx);
    const double m = mc.multiplicity;
    for (int n = 0; n <= n_max; ++n) {
      if (n > 0) {
        Mat3 jac{};
        const HVec F = map.lift(g, jac);
        const HVec dF = map.dlambda(g);
        const double s = F.max_norm();
        if (!(s > 0.0) || !std::isfinite(s)) throw LabError(ErrorKind::DegenerateParameter, "post-critical orbit degenerates");
        gp = (mat_vec(jac, gp) + dF).scaled(1.0 / s);
        g = F.scaled(1.0 / s);
      }
      if (n >= n_min) out[static_cast<std::size_t>(n - n_min)] += m * (cap.a * dlog_norm(g, gp) + cap.dpotential(g, gp));
    }
  }
  return out;
}

struct Curve {
  bool arc = false;
  Complex p, q;        // segment p -> q
  Complex c;           // arc c + r e^{is}
  double r = 0.0;

  Complex at(double s) const { return arc ? c + std::polar(r, s) : p + s * (q - p); }
  Complex velocity(double s) const { return arc ? Complex{0.0, 1.0} * std::polar(r, s) : q - p; }
};

struct Piece {
  Curve curve;
  double s0, s1;
};

std::vector<Piece> boundary_pieces(const ParamRegion& U) {
  std::vector<Piece> out;
  if (U.shape == ParamRegion::Shape::Disc) {
    Curve arc;
    arc.arc = true;
    arc.c = U.center;
    arc.r = U.radius;
    const int m = 16;
    for (int i = 0; i < m; ++i) out.push_back({arc, 2.0 * std::numbers::pi * i / m, 2.0 * std::numbers::pi * (i + 1) / m});
    return out;
  }
  const Rect& b = U.rect;
  const Complex corners[4] = {{b.re_min, b.im_min}, {b.re_max, b.im_min}, {b.re_max, b.im_max}, {b.re_min, b.im_max}};
  for (int k = 0; k < 4; ++k) {
    Curve seg;
    seg.p = corners[k];
    seg.q = corners[(k + 1) % 4];
    for (int i = 0; i < 4; ++i) out.push_back({seg, i / 4.0, (i + 1) / 4.0});
  }
  return out;
}

struct FluxRule {
  std::vector<double> value, magnitude;
};

class FluxIntegrator {
 public:
  FluxIntegrator(const FamilySpec& family, int n_min, int n_max, const CapPotential& cap,
                 const QuadratureOptions& opts, long long budget)
      : family_(family), n_min_(n_min), n_max_(n_max), cap_(cap), opts_(opts), budget_(budget),
        total_(static_cast<std::size_t>(n_max - n_min + 1), 0.0), magnitude_(total_) {}

  void integrate(const Piece& piece) {
    const FluxRule whole = rule(piece.curve, piece.s0, piece.s1);
    recurse(piece.curve, piece.s0, piece.s1, whole, 0);
  }

  const std::vector<double>& total() const { return total_; }
  const std::vector<double>& magnitude() const { return magnitude_; }
  long long evaluations() const { return evaluations_; }
  bool under_resolved() const { return under_resolved_; }

 private:
  FluxRule rule(const Curve& c, double s0, double s1) {
    const auto& gl = gauss();
    const std::size_t ns = total_.size();
    FluxRule out{std::vector<double>(ns, 0.0), std::vector<double>(ns, 0.0)};
    const double half = 0.5 * (s1 - s0), mid = 0.5 * (s0 + s1);
    for (int i = 0; i < GaussLegendre::kN; ++i) {
      const double s = mid + half * gl.x[static_cast<std::size_t>(i)];
      const Complex normal = Complex{0.0, -1.0} * c.velocity(s);
      const auto f = flux_density(family_, c.at(s), n_min_, n_max_, cap_);
      const double wt = half * gl.w[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < ns; ++k) {
        const double v = 0.5 * (f[k] * normal).real();
        out.value[k] += wt * v;
        out.magnitude[k] += wt * std::abs(v);
      }
    }
    evaluations_ += GaussLegendre::kN;
    return out;
  }

  void recurse(const Curve& c, double s0, double s1, const FluxRule& whole, int depth) {
    const double mid = 0.5 * (s0 + s1);
    const FluxRule left = rule(c, s0, mid), right = rule(c, mid, s1);
    bool ok = true;
    for (std::size_t k = 0; k < total_.size() && ok; ++k) {
      const double err = std::abs(whole.value[k] - left.value[k] - right.value[k]);
      const double scale = left.magnitude[k] + right.magnitude[k];
      ok = err <= opts_.boundary_tol * scale + 1e-300;
    }
    if (ok || depth >= 48 || evaluations_ >= budget_) {
      if (!ok) under_resolved_ = true;
      for (std::size_t k = 0; k < total_.size(); ++k) {
        total_[k] += left.value[k] + right.value[k];
        magnitude_[k] += left.magnitude[k] + right.magnitude[k];
      }
      return;
    }
    recurse(c, s0, mid, left, depth + 1);
    recurse(c, mid, s1, right, depth + 1);
  }

  const FamilySpec& family_;
  int n_min_, n_max_;
  const CapPotential& cap_;
  const QuadratureOptions& opts_;
  long long budget_;
  std::vector<double> total_, magnitude_;
  long long evaluations_ = 0;
  bool under_resolved_ = false;
};

GraphMasses boundary_masses(const FamilySpec& family, const Window& window, int n_min, int n_max,
                            const QuadratureOptions& opts) {
  const int n_slots = n_max - n_min + 1;
  const CapPotential cap(window.B);
  const auto pieces = boundary_pieces(window.U);
  const long long budget = std::max<long long>(opts.max_boundary_evals / static_cast<long long>(pieces.size()),
                                               3 * GaussLegendre::kN);
  std::vector<std::vector<double>> flux(pieces.size()), size(pieces.size());
  std::vector<long long> evals(pieces.size(), 0);
  std::vector<char> coarse(pieces.size(), 0);
  parallel_for(pieces.size(), [&](std::size_t i) {
    FluxIntegrator fi(family, n_min, n_max, cap, opts, budget);
    fi.integrate(pieces[i]);
    flux[i] = fi.total();
    size[i] = fi.magnitude();
    evals[i] = fi.evaluations();
    coarse[i] = fi.under_resolved();
  });

  GraphMasses out;
  out.masses.assign(static_cast<std::size_t>(n_slots), 0.0);
  for (int k = 0; k < n_slots; ++k) {
    std::vector<double> parts;
    double noise = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      parts.push_back(flux[i][static_cast<std::size_t>(k)]);
      noise += size[i][static_cast<std::size_t>(k)];
    }
    // The flux is a sum of large cancelling terms; below the quadrature
    // tolerance it carries no information and is only rounding.
    const double v = pairwise_sum(parts);
    out.masses[static_cast<std::size_t>(k)] = std::abs(v) <= opts.boundary_tol * noise ? 0.0 : std::max(v, 0.0);
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    out.evaluations += evals[i];
    out.under_resolved = out.under_resolved || coarse[i];
  }

  // Area term: area of {lambda in U : gamma(lambda) in B}, weighted by multiplicity.
  if (window.B.whole) {
    const double w = 2.0 * family.d - 2.0;
    for (auto& m : out.masses) m += w * window.U.area();
    return out;
  }
  const ParamGrid grid{window.U.bounds(), opts.base, opts.base};
  std::vector<std::vector<double>> inside(grid.size(), std::vector<double>(static_cast<std::size_t>(n_slots), 0.0));
  parallel_for(grid.size(), [&](std::size_t i) {
    const Complex lambda = grid.at(i);
    if (!window.U.contains(lambda)) return;
    family.require_in_domain(lambda);
    const FrozenMap map(family, lambda);
    for (const auto& cp : critical_points(map)) {
      HVec g = cp.point.lift();
      for (int n = 0; n <= n_max; ++n) {
        if (n > 0) {
          const HVec F = map.lift(g);
          g = F.scaled(1.0 / F.max_norm());
        }
        if (n >= n_min && window.B.contains(ProjPoint(g)))
          inside[i][static_cast<std::size_t>(n - n_min)] += cp.multiplicity * grid.cell_area();
      }
    }
  });
  for (int k = 0; k < n_slots; ++k) {
    std::vector<double> parts;
    for (const auto& v : inside) parts.push_back(v[static_cast<std::size_t>(k)]);
    out.masses[static_cast<std::size_t>(k)] += pairwise_sum(parts);
  }
  out.evaluations += static_cast<long long>(grid.size());
  return out;
}

}  // namespace

GraphMasses postcritical_masses(const FamilySpec& family, const Window& window, int n_min, int n_max,
                                const QuadratureOptions& opts) {
  if (family.k != 1) throw LabError(ErrorKind::InvalidArgument, "post-critical masses require k = 1");
  if (n_min < 0 || n_max < n_min) throw LabError(ErrorKind::InvalidArgument, "bad iterate range");
  const int n_slots = n_max - n_min + 1;
  if (opts.method == QuadratureOptions::Method::Boundary) return boundary_masses(family, window, n_min, n_max, opts);
  TrackFn fn = [&](Complex lambda) {
    family.require_in_domain(lambda);
    const FrozenMap map(family, lambda);
    std::vector<TrackSample> out;
    out.reserve(static_cast<std::size_t>(n_slots) * 2 * (family.d - 1));
    for (const auto& cp : critical_points(map)) {
      HVec g = cp.point.lift();
      HVec gp;
      gp.n = g.n;
      if (n_min == 0) out.push_back({cp.point, critical_speed(family, lambda, cp.point), double(cp.multiplicity), 0});
      for (int n = 1; n <= n_max; ++n) {
        Mat3 jac{};
        const HVec F = map.lift(g, jac);
        const HVec dF = map.dlambda(g);
        const double s = F.max_norm();
        if (!(s > 0.0) || !std::isfinite(s)) throw LabError(ErrorKind::DegenerateParameter, "post-critical orbit degenerates");
        gp = (mat_vec(jac, gp) + dF).scaled(1.0 / s);
        g = F.scaled(1.0 / s);
        if (n >= n_min) out.push_back({ProjPoint(g), fs_speed(g, gp), double(cp.multiplicity), n - n_min});
      }
    }
    return out;
  };
  return graph_masses(fn, n_slots, window, opts);
}

const char* to_string(MassSeries::Verdict v) {
  switch (v) {
    case MassSeries::Verdict::Converged: return "converged";
    case MassSeries::Verdict::Diverging: return "diverging";
    case MassSeries::Verdict::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

void classify(MassSeries& s, const VerdictThresholds& th) {
  const std::size_t N = s.per_n.size();
  s.partial_sums.assign(N, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += s.per_n[i];
    s.partial_sums[i] = acc;
  }
  if (N < 2) {
    s.verdict = MassSeries::Verdict::Inconclusive;
    return;
  }
  // Exact zeros add nothing to the series and carry no rate: an orbit that
  // visits the phase ball periodically leaves zeros between its visits.
  const std::size_t first = std::min(N / 2, N - 2);
  std::vector<double> xs, ys;
  auto collect = [&](std::size_t from) {
    xs.clear();
    ys.clear();
    for (std::size_t i = from; i < N; ++i)
      if (s.per_n[i] > 0.0) {
        xs.push_back(static_cast<double>(i));
        ys.push_back(std::log(s.per_n[i]));
      }
  };
  collect(first);
  if (xs.empty()) {
    s.rate = 0.0;
    s.residual = 0.0;
    s.tail_bound = 0.0;
    s.verdict = MassSeries::Verdict::Converged;
    return;
  }
  if (xs.size() < 2) collect(0);
  if (xs.size() < 2) {
    s.verdict = MassSeries::Verdict::Inconclusive;
    return;
  }
  const auto fit = fit_line(xs, ys);
  s.rate = std::exp(fit.slope);
  s.residual = fit.residual;
  s.tail_bound = s.rate < 1.0 ? s.per_n.back() * s.rate / (1.0 - s.rate) : std::numeric_limits<double>::infinity();
  if (s.rate < th.converged_ratio && s.tail_bound < th.tail)
    s.verdict = MassSeries::Verdict::Converged;
  else if (s.rate > th.diverging_ratio)
    s.verdict = MassSeries::Verdict::Diverging;
  else
    s.verdict = MassSeries::Verdict::Inconclusive;
}

MassSeries ramification_series(const FamilySpec& family, const Window& window, int n_max,
                               const QuadratureOptions& quad, const VerdictThresholds& th) {
  const auto gm = postcritical_masses(family, window, 1, n_max + 1, quad);
  MassSeries s;
  s.window = window;
  s.under_resolved = gm.under_resolved;
  const double dinv = 1.0 / std::pow(static_cast<double>(family.d), family.k);
  double w = 1.0;
  for (int n = 0; n <= n_max; ++n) {
    s.per_n.push_back(w * gm.masses[static_cast<std::size_t>(n)]);
    w *= dinv;
  }
  classify(s, th);
  return s;
}

GrowthFit mass_growth_rate(const FamilySpec& family, const ParamRegion& U, int n_max, double eps_fit,
                           const QuadratureOptions& quad) {
  if (n_max < 2) throw LabError(ErrorKind::InvalidArgument, "growth fit needs n_max >= 2");
  const auto gm = postcritical_masses(family, {U, PhaseRegion::all()}, 0, n_max, quad);
  GrowthFit out;
  out.masses = gm.masses;
  out.under_resolved = gm.under_resolved;
  std::vector<double> xs, ys;
  for (int n = n_max / 2; n <= n_max; ++n) {
    xs.push_back(n);
    ys.push_back(std::log(std::max(out.masses[static_cast<std::size_t>(n)], 1e-300)));
  }
  const auto fit = fit_line(xs, ys);
  out.rho = fit.slope;
  out.residual = fit.residual;
  out.stable = out.rho <= eps_fit;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo masses on P^2

namespace {

void require_skew_product(const FamilySpec& f) {
  if (f.k != 2) throw LabError(ErrorKind::InvalidArgument, "Monte Carlo mass requires k = 2");
  const auto mons = FamilySpec::monomials(2, f.d);
  auto zero = [](const std::vector<Complex>& p) {
    for (auto c : p)
      if (c != Complex{}) return false;
    return true;
  };
  for (std::size_t m = 0; m < mons.size(); ++m) {
    if (mons[m][1] != 0 && !zero(f.coeffs[0][m]))
      throw LabError(ErrorKind::InvalidArgument, "first component depends on w: not a skew product");
    if (mons[m] != std::array<int, 3>{0, 0, f.d} && !zero(f.coeffs[2][m]))
      throw LabError(ErrorKind::InvalidArgument, "last component must be t^d");
  }
}

// Coefficients (ascending) of a polynomial of degree <= deg known by values.
std::vector<Complex> coefficients(int deg, const std::function<Complex(Complex)>& f) {
  const int n = deg + 1;
  std::vector<Complex> vals(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) vals[static_cast<std::size_t>(j)] = f(std::polar(1.0, 2.0 * std::numbers::pi * j / n));
  for (int p = 0; p < n; ++p) {
    Complex s{};
    for (int j = 0; j < n; ++j) s += vals[static_cast<std::size_t>(j)] * std::polar(1.0, -2.0 * std::numbers::pi * j * p / n);
    out[static_cast<std::size_t>(p)] = s / static_cast<double>(n);
  }
  return out;
}

double gram_density(const HVec& h, const HVec& dh) {
  double hh = 0.0, dd = 0.0;
  Complex hd{};
  for (int i = 0; i < h.n; ++i) {
    hh += std::norm(h[i]);
    dd += std::norm(dh[i]);
    hd += std::conj(h[i]) * dh[i];
  }
  return std::max(0.0, hh * dd - std::norm(hd)) / (hh * hh);
}

double pushed_density(const FrozenMap& map, HVec h, HVec dh, int n) {
  for (int j = 0; j < n; ++j) {
    Mat3 jac{};
    const HVec F = map.lift(h, jac);
    const double s = F.max_norm();
    if (!(s > 0.0) || !std::isfinite(s)) throw LabError(ErrorKind::DegenerateParameter, "skew product orbit degenerates");
    dh = mat_vec(jac, dh).scaled(1.0 / s);
    h = F.scaled(1.0 / s);
  }
  return gram_density(h, dh);
}

}  // namespace

MonteCarloMass montecarlo_mass_k2(const FamilySpec& family, int n, const ParamRegion& U, int n_samples,
                                  std::uint64_t seed, int grid_side) {
  require_skew_product(family);
  if (n < 0 || n_samples < 2 || grid_side < 1) throw LabError(ErrorKind::InvalidArgument, "bad Monte Carlo size");
  const int d = family.d;
  const ParamGrid pg{U.bounds(), grid_side, grid_side};
  std::vector<Complex> lambdas;
  for (std::size_t i = 0; i < pg.size(); ++i)
    if (U.contains(pg.at(i))) lambdas.push_back(pg.at(i));
  if (lambdas.empty()) throw LabError(ErrorKind::InvalidArgument, "no parameter grid point inside U");

  struct Frozen {
    FrozenMap map;
    std::vector<Complex> vertical;  // critical points of p, with multiplicity
  };
  std::vector<Frozen> maps;
  for (Complex l : lambdas) {
    family.require_in_domain(l);
    FrozenMap map(family, l);
    const auto p = coefficients(d, [&](Complex z) { return map.lift(HVec(z, Complex{}, Complex{1.0}))[0]; });
    std::vector<Complex> dp;
    for (int i = 1; i <= d; ++i) dp.push_back(p[static_cast<std::size_t>(i)] * static_cast<double>(i));
    auto roots = polynomial_roots(dp, 1e-14);
    if (static_cast<int>(roots.size()) != d - 1)
      throw LabError(ErrorKind::InvalidArgument, "degenerate first component of the skew product");
    maps.push_back({map, roots});
  }

  std::vector<double> values(static_cast<std::size_t>(n_samples));
  parallel_for(values.size(), [&](std::size_t i) {
    Rng rng(seed, Stream::MonteCarlo, (static_cast<std::uint64_t>(n) << 40) + i);
    const Frozen& fz = maps[rng.below(maps.size())];
    const double u = rng.uniform();
    const double r = std::sqrt(u / (1.0 - u));
    const Complex t = std::polar(r, 2.0 * std::numbers::pi * rng.uniform());
    const double rho = 1.0 / (std::numbers::pi * std::pow(1.0 + r * r, 2));
    double v = 0.0;
    for (Complex c : fz.vertical)
      v += pushed_density(fz.map, HVec(c, t, Complex{1.0}), HVec(Complex{}, Complex{1.0}, Complex{}), n);
    // Curve dq/dw = 0 over z = t: roots w_i(t), slope w' = -G_z / G_w.
    auto G = [&](Complex z, Complex w) {
      Mat3 jac{};
      fz.map.lift(HVec(z, w, Complex{1.0}), jac);
      return jac[1][1];
    };
    const auto gw = coefficients(d - 1, [&](Complex w) { return G(t, w); });
    double scale = 0.0;
    for (auto c : gw) scale = std::max(scale, std::abs(c));
    if (scale > 0.0) {
      const double h = 1e-6 * (1.0 + r);
      for (Complex w : polynomial_roots(gw, 1e-14)) {
        const double hw = 1e-6 * (1.0 + std::abs(w));
        const Complex Gz = (G(t + h, w) - G(t - h, w)) / (2.0 * h);
        const Complex Gw = (G(t, w + hw) - G(t, w - hw)) / (2.0 * hw);
        if (Gw == Complex{}) continue;
        v += pushed_density(fz.map, HVec(t, w, Complex{1.0}), HVec(Complex{1.0}, -Gz / Gw, Complex{}), n);
      }
    }
    values[i] = v / rho;
  });
  const auto ms = mean_se(values);
  return {ms.mean, ms.se, static_cast<long long>(values.size())};
}

void write_series_csv(std::ostream& os, const MassSeries& s) {
  os << "n,per_n,partial_sum\n" << std::setprecision(17);
  for (std::size_t i = 0; i < s.per_n.size(); ++i) os << i << ',' << s.per_n[i] << ',' << s.partial_sums[i] << '\n';
}

std::vector<PhaseRegion> random_phase_balls(const FamilySpec& family, const ParamRegion& U, int count, double radius,
                                            double spread, std::uint64_t seed, double clearance, int max_tries) {
  std::vector<Complex> track;
  const Rect box = U.bounds();
  for (int iy = 0; iy < 9; ++iy)
    for (int ix = 0; ix < 9; ++ix) {
      const Complex lambda{box.re_min + box.width() * ix / 8.0, box.im_min + box.height() * iy / 8.0};
      if (!U.contains(lambda) && !(ix == 4 && iy == 4)) continue;
      const FrozenMap map(family, lambda);
      for (const auto& cp : critical_points(map)) track.push_back(evaluate(family, lambda, cp.point).affine_value());
    }
  Rng rng(seed, Stream::PhaseBalls);
  std::vector<PhaseRegion> balls;
  for (int tries = 0; tries < max_tries && static_cast<int>(balls.size()) < count; ++tries) {
    const double rho = spread * std::sqrt(rng.uniform());
    const Complex z = std::polar(rho, 2.0 * std::numbers::pi * rng.uniform());
    bool clear = true;
    for (Complex t : track) clear = clear && !(std::abs(t - z) < clearance * radius);
    if (clear) balls.push_back(PhaseRegion::disc(z, radius));
  }
  if (static_cast<int>(balls.size()) < count)
    throw LabError(ErrorKind::NoClearPoint, "could not place phase balls clear of the first post-critical tracks");
  return balls;
}

}  // namespace stablab
