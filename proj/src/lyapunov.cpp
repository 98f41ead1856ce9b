#include "stablab/lyapunov.hpp"

#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <numbers>

#include "stablab/equilibrium.hpp"
#include "stablab/parallel.hpp"
#include "stablab/rng.hpp"
#include "stablab/roots.hpp"
#include "stablab/stats.hpp"

namespace stablab {

namespace {

constexpr double kMatchTol = 1e-7;
constexpr double kMaxCondition = 1e8;

int largest_coordinate(const HVec& h) {
  int best = 0;
  for (int i = 1; i < h.n; ++i)
    if (std::abs(h[i]) > std::abs(h[best])) best = i;
  return best;
}

// Multiplier of f^len along the orbit of p, in the charts of the visited points.
Complex orbit_multiplier(const FrozenMap& map, const ProjPoint& p, int len) {
  Complex mult = 1.0;
  ProjPoint z = p;
  for (int j = 0; j < len; ++j) {
    const ProjPoint next(map.apply(z.lift()));
    mult *= derivative(map, z, largest_coordinate(z.lift()), largest_coordinate(next.lift())).affine;
    z = next;
  }
  return mult;
}

}  // namespace

int CycleSet::repelling_points() const {
  int n = 0;
  for (const auto& c : cycles) n += c.period;
  return n;
}

CycleSet repelling_cycles(const FrozenMap& map, int n) {
  if (map.k() != 1) throw LabError(ErrorKind::InvalidArgument, "periodic points are implemented for k = 1");
  if (n < 1) throw LabError(ErrorKind::InvalidArgument, "period must be >= 1");
  const double dn = std::pow(static_cast<double>(map.d()), n);
  if (dn > 65536.0)
    throw LabError(ErrorKind::RootBudget, "d^n = " + std::to_string(static_cast<long long>(dn)) +
                                              " exceeds the root-finding budget 2^16");
  const int degree = static_cast<int>(dn) + 1;

  auto form = [&](const HVec& z, Complex& val, HVec& grad) {
    HVec h = z;
    std::array<std::array<Complex, 2>, 2> J{{{Complex{1.0}, Complex{}}, {Complex{}, Complex{1.0}}}};
    for (int step = 0; step < n; ++step) {
      Mat3 jac{};
      const HVec F = map.lift(h, jac);
      double s = F.max_norm();
      if (!(s > 0.0) || !std::isfinite(s)) s = 1.0;
      std::array<std::array<Complex, 2>, 2> Jn{};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) Jn[a][b] = (jac[a][0] * J[0][b] + jac[a][1] * J[1][b]) / s;
      J = Jn;
      h = F.scaled(1.0 / s);
    }
    val = z[0] * h[1] - z[1] * h[0];
    grad = HVec(h[1] + z[0] * J[1][0] - z[1] * J[0][0], -h[0] + z[0] * J[1][1] - z[1] * J[0][1]);
  };

  AberthOptions opts;
  opts.max_iter = 1000;
  const auto lifts = projective_roots(degree, form, opts);

  CycleSet out;
  out.n = n;
  out.roots = degree;
  const std::size_t N = lifts.size();
  std::vector<ProjPoint> pts;
  pts.reserve(N);
  for (const auto& h : lifts) pts.emplace_back(h);

  std::vector<char> excluded(N, 0);
  for (std::size_t i = 0; i < N; ++i) {
    HVec h = pts[i].lift();
    for (int j = 0; j < n; ++j) h = map.apply(h);
    out.max_residual = std::max(out.max_residual, fs_distance(h, pts[i].lift()));
    const Complex mult = orbit_multiplier(map, pts[i], n);
    const double gap = std::abs(1.0 - mult);
    if (!(gap * kMaxCondition > 1.0)) excluded[i] = 1;
  }

  // Successor map: f(root) matched to the nearest root.
  std::vector<int> succ(N, -1);
  for (std::size_t i = 0; i < N; ++i) {
    if (excluded[i]) continue;
    const HVec image = map.apply(pts[i].lift());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < N; ++j) {
      if (excluded[j]) continue;
      const double dist = fs_distance(image, pts[j].lift());
      if (dist < best) {
        best = dist;
        succ[i] = static_cast<int>(j);
      }
    }
    if (best > kMatchTol) succ[i] = -1;
  }

  std::vector<char> visited(N, 0);
  for (std::size_t i = 0; i < N; ++i) {
    if (visited[i]) continue;
    if (excluded[i]) {
      visited[i] = 1;
      ++out.ill_conditioned;
      continue;
    }
    std::vector<int> path{static_cast<int>(i)};
    int cur = succ[i];
    while (cur >= 0 && cur != static_cast<int>(i) && static_cast<int>(path.size()) <= n && !visited[cur]) {
      path.push_back(cur);
      cur = succ[static_cast<std::size_t>(cur)];
    }
    const int len = static_cast<int>(path.size());
    if (cur != static_cast<int>(i) || n % len != 0) {
      visited[i] = 1;
      ++out.ill_conditioned;
      continue;
    }
    RepellingCycle cyc;
    cyc.period = len;
    cyc.multiplier = 1.0;
    for (int j = 0; j < len; ++j) {
      const auto& p = pts[static_cast<std::size_t>(path[j])];
      const auto& q = pts[static_cast<std::size_t>(path[(j + 1) % len])];
      visited[static_cast<std::size_t>(path[j])] = 1;
      cyc.points.push_back(p);
      cyc.multiplier *= derivative(map, p, largest_coordinate(p.lift()), largest_coordinate(q.lift())).affine;
      cyc.one_step_log_jac_sum += std::log(derivative(map, p).jac_abs);
    }
    if (std::abs(cyc.multiplier) > 1.0) {
      out.cycles.push_back(std::move(cyc));
    } else {
      out.non_repelling += len;
    }
  }
  return out;
}

CycleSet repelling_cycles(const FamilySpec& family, Complex lambda, int n) {
  family.require_in_domain(lambda);
  return repelling_cycles(FrozenMap(family, lambda), n);
}

ApproxLyapunov approx_lyapunov(const FrozenMap& map, int n) {
  const auto set = repelling_cycles(map, n);
  std::vector<double> terms;
  for (const auto& c : set.cycles) terms.push_back(c.one_step_log_jac_sum);
  ApproxLyapunov out;
  out.value = pairwise_sum(terms) * std::pow(static_cast<double>(map.d()), -n);
  out.points_used = set.repelling_points();
  out.excluded = set.ill_conditioned;
  return out;
}

ApproxLyapunov approx_lyapunov(const FamilySpec& family, Complex lambda, int n) {
  family.require_in_domain(lambda);
  return approx_lyapunov(FrozenMap(family, lambda), n);
}

double green_formula_lyapunov(const FamilySpec& family, Complex lambda, int depth) {
  if (!family.is_polynomial())
    throw LabError(ErrorKind::NotPolynomial, "Green formula requires a polynomial family");
  family.require_in_domain(lambda);
  FrozenMap map(family, lambda);
  const Complex b = map.lift(HVec(Complex{}, Complex{1.0}))[1];
  if (b == Complex{}) throw LabError(ErrorKind::DegenerateParameter, "leading lift coefficient vanishes");
  map.rescale(1.0 / b);
  double sum = std::log(static_cast<double>(map.d()));
  for (const auto& c : critical_points(map)) {
    if (c.point.equals(ProjPoint::infinity(), 1e-9)) continue;
    sum += c.multiplicity * green(map, c.point, depth).value;
  }
  return sum;
}

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::GreenFormula: return "green";
    case Estimator::Approximation: return "approx";
    case Estimator::Birkhoff: return "birkhoff";
  }
  return "unknown";
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "green") return Estimator::GreenFormula;
  if (s == "approx") return Estimator::Approximation;
  if (s == "birkhoff") return Estimator::Birkhoff;
  throw LabError(ErrorKind::Config, "unknown estimator '" + s + "'");
}

double estimate_lyapunov(const FamilySpec& family, Complex lambda, Estimator est,
                         const EstimatorParams& params) {
  switch (est) {
    case Estimator::GreenFormula: return green_formula_lyapunov(family, lambda, params.depth);
    case Estimator::Approximation: return approx_lyapunov(family, lambda, params.period).value;
    case Estimator::Birkhoff: {
      const auto s = sample_equilibrium(family, lambda, params.n_points, params.sample_depth, params.seed);
      return birkhoff_lyapunov(family, lambda, s, params.n_iter).mean;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double LyapunovRaster::total_mass() const {
  std::vector<double> abs;
  for (double v : laplacian)
    if (std::isfinite(v)) abs.push_back(std::abs(v));
  return pairwise_sum(abs);
}

std::vector<double> laplacian_mass(const ParamGrid& grid, const std::vector<double>& values) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> lap(grid.size(), nan);
  const double dx = grid.dx(), dy = grid.dy();
  const double scale = grid.cell_area() / (2.0 * std::numbers::pi);
  for (int iy = 1; iy + 1 < grid.ny; ++iy)
    for (int ix = 1; ix + 1 < grid.nx; ++ix) {
      const double c = values[grid.index(ix, iy)];
      const double e = values[grid.index(ix + 1, iy)], w = values[grid.index(ix - 1, iy)];
      const double n = values[grid.index(ix, iy + 1)], s = values[grid.index(ix, iy - 1)];
      const double l = ((e + w - 2.0 * c) / (dx * dx) + (n + s - 2.0 * c) / (dy * dy)) * scale;
      lap[grid.index(ix, iy)] = l;  // NaN propagates from failed neighbours
    }
  return lap;
}

LyapunovRaster lyapunov_raster(const FamilySpec& family, const ParamGrid& grid, Estimator est,
                               const EstimatorParams& params) {
  if (static_cast<long long>(grid.nx) * grid.ny > 4096LL * 4096LL || grid.nx < 1 || grid.ny < 1)
    throw LabError(ErrorKind::InvalidArgument, "raster resolution must be within 4096^2");
  LyapunovRaster r;
  r.grid = grid;
  r.estimator = est;
  r.values.assign(grid.size(), 0.0);
  std::vector<char> failed(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    EstimatorParams p = params;
    p.seed = splitmix64(params.seed + i);
    try {
      r.values[i] = estimate_lyapunov(family, grid.at(i), est, p);
      if (!std::isfinite(r.values[i])) failed[i] = 1;
    } catch (const LabError&) {
      failed[i] = 1;
    }
    if (failed[i]) r.values[i] = std::numeric_limits<double>::quiet_NaN();
  });
  for (char f : failed) r.failures += f;
  if (r.failures * 100 >= static_cast<int>(grid.size()) && r.failures > 0)
    throw LabError(ErrorKind::FailureBudget,
                   std::to_string(r.failures) + " of " + std::to_string(grid.size()) + " raster cells failed");
  r.laplacian = laplacian_mass(grid, r.values);
  return r;
}

void write_raster_csv(std::ostream& os, const LyapunovRaster& raster) {
  os << "lambda_re,lambda_im,L,laplacian\n" << std::setprecision(17);
  for (std::size_t i = 0; i < raster.grid.size(); ++i) {
    const Complex c = raster.grid.at(i);
    os << c.real() << ',' << c.imag() << ',' << raster.values[i] << ',' << raster.laplacian[i] << '\n';
  }
}

namespace {

bool bounded_orbit(Complex c, int max_iter, double radius) {
  Complex z = 0.0;
  const double r2 = radius * radius;
  for (int i = 0; i < max_iter; ++i) {
    z = z * z + c;
    if (std::norm(z) > r2) return false;
  }
  return true;
}

// Upper bound 2 |z| log|z| / |dz/dc| (Koebe) on the distance from an escaping
// c to the Mandelbrot set; infinity when the orbit stays bounded.
double exterior_distance_bound(Complex c, int max_iter) {
  Complex z = 0.0, dz = 0.0;
  for (int i = 0; i < max_iter; ++i) {
    dz = 2.0 * z * dz + 1.0;
    z = z * z + c;
    const double a = std::abs(z);
    if (a > 1e10) return 2.0 * a * std::log(a) / std::abs(dz);
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

EscapeRaster escape_time_quadratic(const ParamGrid& grid, int max_iter, double escape_radius) {
  EscapeRaster out;
  out.grid = grid;
  const int nx = grid.nx, ny = grid.ny;
  out.inside.assign(grid.size(), 0);
  std::vector<char> corner(static_cast<std::size_t>(nx + 1) * (ny + 1), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    out.inside[i] = bounded_orbit(grid.at(i), max_iter, escape_radius);
  });
  parallel_for(corner.size(), [&](std::size_t i) {
    const int cx = static_cast<int>(i % (nx + 1)), cy = static_cast<int>(i / (nx + 1));
    const Complex c{grid.rect.re_min + cx * grid.dx(), grid.rect.im_min + cy * grid.dy()};
    corner[i] = bounded_orbit(c, max_iter, escape_radius);
  });
  // Filaments thinner than a cell escape every sample; the distance bound
  // certifies them.
  const double half_diagonal = 0.5 * std::hypot(grid.dx(), grid.dy());
  std::vector<char> filament(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    if (!out.inside[i]) filament[i] = exterior_distance_bound(grid.at(i), max_iter) <= half_diagonal;
  });
  out.boundary.assign(grid.size(), 0);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const char s = out.inside[grid.index(ix, iy)];
      bool mixed = false;
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx)
          mixed = mixed || corner[static_cast<std::size_t>(iy + dy) * (nx + 1) + ix + dx] != s;
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& o : nb) {
        const int jx = ix + o[0], jy = iy + o[1];
        if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
        mixed = mixed || out.inside[grid.index(jx, jy)] != s;
      }
      out.boundary[grid.index(ix, iy)] = mixed || filament[grid.index(ix, iy)];
    }
  // Multi-source BFS over the 8-neighbourhood gives Chebyshev distance.
  const int far = std::numeric_limits<int>::max();
  out.distance.assign(grid.size(), far);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (out.boundary[i]) {
      out.distance[i] = 0;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int ix = static_cast<int>(i % nx), iy = static_cast<int>(i / nx);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int jx = ix + dx, jy = iy + dy;
        if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
        const std::size_t j = grid.index(jx, jy);
        if (out.distance[j] == far) {
          out.distance[j] = out.distance[i] + 1;
          queue.push_back(j);
        }
      }
  }
  return out;
}

}  // namespace stablab
