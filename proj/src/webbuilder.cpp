#include "stablab/webbuilder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "stablab/parallel.hpp"
#include "stablab/rng.hpp"
#include "stablab/roots.hpp"
#include "stablab/stats.hpp"

namespace stablab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// f^{n+1}(c_j) for n = 0..n_max as normalized lifts, holomorphic in lambda
// through a fixed rotated chart for the critical points.
struct PostcriticalLifts {
  std::vector<std::vector<HVec>> points;  // [n][j]
  std::vector<int> multiplicity;
};

PostcriticalLifts postcritical_lifts(const FamilySpec& family, Complex lambda, int n_max) {
  family.require_in_domain(lambda);
  const FrozenMap map(family, lambda);
  const ChartRotation rot;
  PostcriticalLifts out;
  out.points.assign(static_cast<std::size_t>(n_max + 1), {});
  for (const auto& c : critical_points(map)) {
    HVec g = rot.apply(rot.inverse(c.point.lift()));
    out.multiplicity.push_back(c.multiplicity);
    for (int n = 0; n <= n_max; ++n) {
      const HVec F = map.lift(g);
      const double s = F.max_norm();
      if (!(s > 0.0) || !std::isfinite(s)) throw LabError(ErrorKind::DegenerateParameter, "post-critical orbit degenerates");
      g = F.scaled(1.0 / s);
      out.points[static_cast<std::size_t>(n)].push_back(g);
    }
  }
  return out;
}

HVec affine_lift(Complex z) { return HVec(z, Complex{1.0}); }

}  // namespace

double track_clearance(const FamilySpec& family, Complex lambda, Complex z, int n_scan) {
  if (n_scan < 1) throw LabError(ErrorKind::InvalidArgument, "n_scan must be >= 1");
  const auto pc = postcritical_lifts(family, lambda, n_scan - 1);
  const HVec target = affine_lift(z);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& level : pc.points)
    for (const auto& g : level) best = std::min(best, fs_distance(g, target));
  return best;
}

BasePoint pick_base(const FamilySpec& family, Complex lambda0, Complex z0, const BaseOptions& opts) {
  if (family.k != 1) throw LabError(ErrorKind::InvalidArgument, "web construction requires k = 1");
  double best = 0.0;
  for (int attempt = 0; attempt <= opts.retries; ++attempt) {
    Complex z = z0;
    if (attempt > 0) {
      Rng rng(opts.seed, Stream::Jitter, static_cast<std::uint64_t>(attempt));
      z += std::polar(opts.jitter * std::sqrt(rng.uniform()), kTwoPi * rng.uniform());
    }
    const double c = track_clearance(family, lambda0, z, opts.n_scan);
    best = std::max(best, c);
    if (c > opts.clearance) return {lambda0, z, c, attempt + 1};
  }
  std::ostringstream msg;
  msg << "no base point with clearance > " << opts.clearance << " (best " << best << ")";
  throw LabError(ErrorKind::NoClearPoint, msg.str());
}

// ---------------------------------------------------------------------------
// Line slices

std::vector<int> slice_counts(const FamilySpec& family, const BasePoint& a, Complex dir_lambda, Complex dir_z,
                              double radius, int n_max, bool* failed) {
  const std::size_t nl = static_cast<std::size_t>(n_max + 1);
  bool bad = false;
  // Unit phase of prod_j det[g_{n,j}, (z, 1)]^{m_j} on the circle |t| = radius.
  auto phases = [&](double theta, std::vector<Complex>& out) {
    const Complex t = std::polar(radius, theta);
    const auto pc = postcritical_lifts(family, a.lambda + t * dir_lambda, n_max);
    const Complex z = a.z + t * dir_z;
    out.assign(nl, Complex{1.0});
    for (std::size_t n = 0; n < nl; ++n)
      for (std::size_t j = 0; j < pc.multiplicity.size(); ++j) {
        const HVec& g = pc.points[n][j];
        const Complex det = g[0] - g[1] * z;
        const double m = std::abs(det);
        if (!(m > 1e-300)) return false;
        for (int e = 0; e < pc.multiplicity[j]; ++e) out[n] *= det / m;
      }
    return true;
  };
  const double h0 = kTwoPi / 64.0, hmin = kTwoPi * 0x1.0p-30;
  std::vector<double> winding(nl, 0.0);
  std::vector<Complex> cur, next;
  bad = !phases(0.0, cur);
  double theta = 0.0, h = h0;
  long long evals = 1;
  while (!bad && theta < kTwoPi) {
    const double to = std::min(theta + h, kTwoPi);
    if (!phases(to, next)) {
      bad = true;
      break;
    }
    ++evals;
    double worst = 0.0;
    for (std::size_t n = 0; n < nl; ++n) worst = std::max(worst, std::abs(std::arg(next[n] / cur[n])));
    if (worst > std::numbers::pi / 4) {
      if (h <= hmin || evals > 200000) {
        bad = true;
        break;
      }
      h *= 0.5;
      continue;
    }
    for (std::size_t n = 0; n < nl; ++n) winding[n] += std::arg(next[n] / cur[n]);
    cur.swap(next);
    theta = to;
    h = std::min(2.0 * h, h0);
  }
  std::vector<int> counts(nl, 0);
  for (std::size_t n = 0; n < nl; ++n) counts[n] = static_cast<int>(std::lround(winding[n] / kTwoPi));
  if (failed) *failed = bad;
  return counts;
}

std::vector<LineSample> good_lines(const FamilySpec& family, const BasePoint& a, double r, double eps, int n_max,
                                   int n_lines, std::uint64_t seed) {
  if (!(r > 0.0) || !(eps > 0.0) || n_max < 0 || n_lines < 1)
    throw LabError(ErrorKind::InvalidArgument, "bad line sampling parameters");
  std::vector<LineSample> out(static_cast<std::size_t>(n_lines));
  const double d = family.d;
  parallel_for(out.size(), [&](std::size_t i) {
    Rng rng(seed, Stream::Lines, i);
    const double u = rng.uniform();
    const Complex zeta = std::polar(std::sqrt(u / (1.0 - u)), kTwoPi * rng.uniform());
    const double norm = std::sqrt(1.0 + std::norm(zeta));
    LineSample& L = out[i];
    L.dir_lambda = 1.0 / norm;
    L.dir_z = zeta / norm;
    L.radius = r;
    L.counts = slice_counts(family, a, L.dir_lambda, L.dir_z, r, n_max, &L.failed);
    double w = 1.0;
    std::vector<double> terms;
    for (int c : L.counts) {
      terms.push_back(w * std::max(c, 0));
      w /= d;
    }
    L.tail_mass = pairwise_sum(terms);
    L.good = !L.failed && L.tail_mass <= eps;
  });
  return out;
}

double good_fraction(const std::vector<LineSample>& lines) {
  if (lines.empty()) return 0.0;
  return static_cast<double>(std::count_if(lines.begin(), lines.end(), [](const LineSample& l) { return l.good; })) /
         static_cast<double>(lines.size());
}

BallGrid make_ball_grid(const BasePoint& a, double r, double tau, int n_z, std::uint64_t seed) {
  if (n_z < 1) throw LabError(ErrorKind::InvalidArgument, "need at least one B0 sample");
  BallGrid g;
  g.radius = 0.5 * tau * r;
  g.lambdas.push_back(a.lambda);
  for (double frac : {0.5, 1.0})
    for (int m = 0; m < 8; ++m) g.lambdas.push_back(a.lambda + std::polar(frac * g.radius, kTwoPi * (m + 0.5 * (frac == 1.0)) / 8));
  g.zs.push_back(a.z);
  for (int k = 1; k < n_z; ++k) {
    Rng rng(seed, Stream::BallSamples, static_cast<std::uint64_t>(k));
    g.zs.push_back(a.z + std::polar(g.radius * std::sqrt(rng.uniform()), kTwoPi * rng.uniform()));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverse branches

namespace {

// Everything the inverse step needs at one point (lambda, z) of C^2.
struct Station {
  Complex lambda;
  HVec base;  // (z, 1)
  FrozenMap map;
  std::vector<ProjPoint> critical_values;
  std::vector<Complex> critical_x;  // critical points in the rotated chart
};

Station make_station(const FamilySpec& family, Complex lambda, Complex z) {
  family.require_in_domain(lambda);
  Station st{lambda, affine_lift(z), FrozenMap(family, lambda), {}, {}};
  const ChartRotation rot;
  for (const auto& c : critical_points(st.map)) {
    st.critical_values.emplace_back(st.map.apply(c.point.lift()));
    st.critical_x.push_back(rot.inverse(c.point.lift()));
  }
  return st;
}

// Solves f(w) = target near the chart coordinate `guess`.
bool inverse_step(const Station& st, const HVec& target, Complex guess, double delta_crit, Complex& out) {
  for (const auto& cv : st.critical_values)
    if (fs_distance(cv.lift(), target) < delta_crit) return false;
  const ChartRotation rot;
  const HVec dir = rot.direction();
  Complex x = guess;
  bool converged = false;
  for (int it = 0; it < 40 && !converged; ++it) {
    Mat3 jac{};
    const HVec F = st.map.lift(rot.apply(x), jac);
    const HVec dF = mat_vec(jac, dir);
    const Complex phi = F[0] * target[1] - F[1] * target[0];
    const Complex dphi = dF[0] * target[1] - dF[1] * target[0];
    if (dphi == Complex{}) return false;
    const Complex step = phi / dphi;
    x -= step;
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    // Quadratic convergence: after a step this small the error is below 1e-16.
    converged = std::norm(step) <= 1e-20 * (1.0 + std::norm(x));
  }
  if (!converged) return false;
  double near = std::numeric_limits<double>::infinity();
  for (Complex c : st.critical_x) near = std::min(near, std::norm(guess - c));
  if (std::norm(x - guess) >= 0.25 * near) return false;
  out = x;
  return true;
}

// Continues a child branch along paths of stations starting at the centre.
// paths[p] lists station indices from the centre outwards (centre excluded).
bool continue_child(const std::vector<Station>& stations, const std::vector<std::vector<int>>& paths,
                    const std::vector<HVec>& parent, Complex x0, double delta_crit, std::vector<Complex>& xs) {
  xs.assign(stations.size(), Complex{});
  xs[0] = x0;
  for (const auto& path : paths) {
    Complex prev = x0, prevprev = x0;
    for (std::size_t k = 0; k < path.size(); ++k) {
      const int idx = path[k];
      const Complex guess = k == 0 ? prev : 2.0 * prev - prevprev;
      Complex x;
      if (!inverse_step(stations[static_cast<std::size_t>(idx)], parent[static_cast<std::size_t>(idx)], guess,
                        delta_crit, x))
        return false;
      xs[static_cast<std::size_t>(idx)] = x;
      prevprev = prev;
      prev = x;
    }
  }
  return true;
}

std::vector<HVec> lifts_of(const std::vector<Complex>& xs) {
  const ChartRotation rot;
  std::vector<HVec> out;
  out.reserve(xs.size());
  for (Complex x : xs) {
    const HVec h = rot.apply(x);
    out.push_back(h.scaled(1.0 / h.max_norm()));
  }
  return out;
}

}  // namespace

const ProjPoint& BranchTree::value(int n, int s, std::size_t point) const {
  const int slot = S_slot[static_cast<std::size_t>(n)][static_cast<std::size_t>(s)];
  if (slot < 0) throw LabError(ErrorKind::InvalidArgument, "branch is not in S_n");
  return ball_values[static_cast<std::size_t>(n)][static_cast<std::size_t>(slot)][point];
}

BranchTree build_branch_tree(const FamilySpec& family, const BasePoint& a, double r,
                             const std::vector<LineSample>& lines, const TreeOptions& opts) {
  if (family.k != 1) throw LabError(ErrorKind::InvalidArgument, "web construction requires k = 1");
  if (opts.n_max < 1 || !(opts.tau > 0.0 && opts.tau < 1.0) || !(opts.eps > 0.0 && opts.eps < 0.5) ||
      opts.rings < 1 || opts.rays < 1 || opts.path_steps < 1)
    throw LabError(ErrorKind::InvalidArgument, "bad tree options");
  const int d = family.d;
  if (opts.n_max * std::log2(static_cast<double>(d)) > 14.0 + 1e-12)
    throw LabError(ErrorKind::LevelBudget, "d^n_max exceeds the level budget 2^14");
  if (lines.empty()) throw LabError(ErrorKind::InvalidArgument, "no lines");
  if (good_fraction(lines) < 0.5) throw LabError(ErrorKind::InvalidArgument, "fewer than half of the lines are good");

  BranchTree tree;
  tree.base = a;
  tree.r = r;
  tree.opts = opts;
  tree.d = d;
  tree.n_lines = static_cast<int>(lines.size());
  const int N = opts.n_max;
  const ChartRotation rot;

  // Fiber of a under f^n at lambda0, with the parent structure s -> s / d.
  const FrozenMap map0(family, a.lambda);
  tree.fiber.assign(static_cast<std::size_t>(N + 1), {});
  tree.fiber[0].push_back(ProjPoint::affine(a.z));
  for (int n = 1; n <= N; ++n)
    for (const auto& p : tree.fiber[static_cast<std::size_t>(n - 1)]) {
      const auto pre = preimages(map0, p);
      if (static_cast<int>(pre.size()) != d) throw LabError(ErrorKind::RootFinding, "incomplete fiber");
      for (const auto& q : pre) tree.fiber[static_cast<std::size_t>(n)].push_back(q);
    }

  // Continuation over each good line's disc, depth first through the tree.
  std::vector<const LineSample*> good;
  for (const auto& l : lines)
    if (l.good) good.push_back(&l);
  tree.n_good_lines = static_cast<int>(good.size());
  std::vector<std::vector<std::vector<int>>> hits(good.size());
  parallel_for(good.size(), [&](std::size_t li) {
    const LineSample& L = *good[li];
    std::vector<Station> st;
    std::vector<std::vector<int>> paths(static_cast<std::size_t>(opts.rays));
    st.push_back(make_station(family, a.lambda, a.z));
    for (int m = 0; m < opts.rays; ++m)
      for (int k = 1; k <= opts.rings; ++k) {
        const Complex t = std::polar(r * k / opts.rings, kTwoPi * m / opts.rays);
        paths[static_cast<std::size_t>(m)].push_back(static_cast<int>(st.size()));
        st.push_back(make_station(family, a.lambda + t * L.dir_lambda, a.z + t * L.dir_z));
      }
    auto& h = hits[li];
    h.assign(static_cast<std::size_t>(N + 1), {});
    for (int n = 0; n <= N; ++n) h[static_cast<std::size_t>(n)].assign(tree.fiber[static_cast<std::size_t>(n)].size(), 0);
    h[0][0] = 1;
    std::vector<HVec> level0;
    for (const auto& s : st) level0.push_back(s.base);
    auto descend = [&](auto&& self, int n, int s, const std::vector<HVec>& vals) -> void {
      if (n == N) return;
      std::vector<Complex> xs;
      for (int k = 0; k < d; ++k) {
        const int child = s * d + k;
        const Complex x0 = rot.inverse(tree.fiber[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(child)].lift());
        if (!continue_child(st, paths, vals, x0, opts.delta_crit, xs)) continue;
        h[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(child)] = 1;
        self(self, n + 1, child, lifts_of(xs));
      }
    };
    descend(descend, 0, 0, level0);
  });

  tree.line_hits.assign(static_cast<std::size_t>(N + 1), {});
  tree.S.assign(static_cast<std::size_t>(N + 1), {});
  tree.S_slot.assign(static_cast<std::size_t>(N + 1), {});
  const double need = (1.0 - 2.0 * std::sqrt(opts.eps)) * tree.n_lines;
  for (int n = 0; n <= N; ++n) {
    auto& lh = tree.line_hits[static_cast<std::size_t>(n)];
    lh.assign(tree.fiber[static_cast<std::size_t>(n)].size(), 0);
    for (const auto& h : hits)
      for (std::size_t s = 0; s < lh.size(); ++s) lh[s] += h[static_cast<std::size_t>(n)][s];
    auto& slot = tree.S_slot[static_cast<std::size_t>(n)];
    slot.assign(lh.size(), -1);
    for (std::size_t s = 0; s < lh.size(); ++s)
      if (lh[s] >= need) {
        slot[s] = static_cast<int>(tree.S[static_cast<std::size_t>(n)].size());
        tree.S[static_cast<std::size_t>(n)].push_back(static_cast<int>(s));
      }
  }
  for (int n = 0; n < N; ++n)
    for (int s : tree.S[static_cast<std::size_t>(n)]) {
      int c = 0;
      for (int k = 0; k < d; ++k) c += tree.S_slot[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(s * d + k)] >= 0;
      tree.max_children = std::max(tree.max_children, c);
    }

  // Extension of the S-branches to the ball grid along straight paths from a.
  tree.ball = make_ball_grid(a, r, opts.tau, opts.n_z, opts.seed);
  const std::size_t P = tree.ball.size();
  tree.ball_values.assign(static_cast<std::size_t>(N + 1), {});
  for (int n = 0; n <= N; ++n)
    tree.ball_values[static_cast<std::size_t>(n)].assign(tree.S[static_cast<std::size_t>(n)].size(),
                                                         std::vector<ProjPoint>(P));
  std::vector<double> semi(P, 0.0), fib(P, 0.0);
  std::vector<std::string> failure(P);
  parallel_for(P, [&](std::size_t q) {
    const Complex lq = tree.ball.lambdas[q % tree.ball.lambdas.size()];
    const Complex zq = tree.ball.zs[q / tree.ball.lambdas.size()];
    std::vector<Station> st;
    std::vector<std::vector<int>> paths(1);
    st.push_back(make_station(family, a.lambda, a.z));
    for (int j = 1; j <= opts.path_steps; ++j) {
      const double f = static_cast<double>(j) / opts.path_steps;
      paths[0].push_back(static_cast<int>(st.size()));
      st.push_back(make_station(family, a.lambda + f * (lq - a.lambda), a.z + f * (zq - a.z)));
    }
    const Station& end = st.back();
    std::vector<HVec> level0;
    for (const auto& s : st) level0.push_back(s.base);
    if (!tree.S[0].empty()) tree.ball_values[0][0][q] = ProjPoint(end.base);
    auto descend = [&](auto&& self, int n, int s, const std::vector<HVec>& vals) -> void {
      if (n == N || !failure[q].empty()) return;
      std::vector<Complex> xs;
      for (int k = 0; k < d; ++k) {
        const int child = s * d + k;
        const int slot = tree.S_slot[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(child)];
        if (slot < 0) continue;
        const Complex x0 = rot.inverse(tree.fiber[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(child)].lift());
        if (!continue_child(st, paths, vals, x0, opts.delta_crit, xs)) {
          std::ostringstream msg;
          msg << "branch " << child << " of level " << n + 1 << " does not extend to ball point (" << lq << ", " << zq << ")";
          failure[q] = msg.str();
          return;
        }
        const auto child_vals = lifts_of(xs);
        const HVec& w = child_vals.back();
        tree.ball_values[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(slot)][q] = ProjPoint(w);
        semi[q] = std::max(semi[q], fs_distance(end.map.apply(w), vals.back()));
        HVec y = w;
        for (int i = 0; i <= n; ++i) y = end.map.apply(y);
        fib[q] = std::max(fib[q], fs_distance(y, end.base));
        self(self, n + 1, child, child_vals);
      }
    };
    if (!tree.S[0].empty()) descend(descend, 0, 0, level0);
  });
  for (std::size_t q = 0; q < P; ++q)
    if (!failure[q].empty()) throw LabError(ErrorKind::ExtensionFailure, failure[q]);
  for (std::size_t q = 0; q < P; ++q) {
    tree.semiconjugacy_residual = std::max(tree.semiconjugacy_residual, semi[q]);
    tree.fiber_residual = std::max(tree.fiber_residual, fib[q]);
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Web measures

double WebSample::total_weight() const {
  std::vector<double> w;
  for (const auto& a : atoms) w.push_back(a.weight);
  return pairwise_sum(w);
}

WebSample cesaro_web(const BranchTree& tree, int n) {
  const int N = static_cast<int>(tree.S.size()) - 1;
  if (n < 1 || n > N) throw LabError(ErrorKind::InvalidArgument, "web level out of range");
  WebSample out;
  out.n = n;
  const int nz = static_cast<int>(tree.ball.zs.size());
  for (int r = 1; r <= n; ++r) {
    const double w = std::pow(static_cast<double>(tree.d), -r) / (static_cast<double>(n) * nz);
    for (int s : tree.S[static_cast<std::size_t>(r)])
      for (int k = 0; k < nz; ++k) out.atoms.push_back({r, s, k, w});
  }
  return out;
}

std::vector<WebLevel> build_web(const BranchTree& tree) {
  const int N = static_cast<int>(tree.S.size()) - 1;
  const double d = tree.d;
  auto children = [&](int r, int s) {
    int c = 0;
    for (int k = 0; k < tree.d; ++k) c += tree.S_slot[static_cast<std::size_t>(r + 1)][static_cast<std::size_t>(s * tree.d + k)] >= 0;
    return c;
  };
  std::vector<WebLevel> out;
  for (int n = 1; n <= N; ++n) {
    WebLevel L;
    L.n = n;
    L.fiber_size = static_cast<long long>(tree.fiber[static_cast<std::size_t>(n)].size());
    L.s_size = static_cast<int>(tree.S[static_cast<std::size_t>(n)].size());
    L.mass = std::pow(d, -n) * L.s_size;
    std::vector<double> masses, diffs, step;
    for (int r = 1; r <= n; ++r) masses.push_back(std::pow(d, -r) * tree.S[static_cast<std::size_t>(r)].size() / n);
    L.cesaro_mass = pairwise_sum(masses);
    // M^n has weight d^{-r}/n on S_r (r = 1..n); F_* M^n has weight
    // c(s) d^{-r-1}/n on s in S_r (r = 0..n-1), c(s) = children of s in S_{r+1}.
    for (int r = 0; r <= n; ++r)
      for (int s : tree.S[static_cast<std::size_t>(r)]) {
        const double w = r >= 1 ? std::pow(d, -r) / n : 0.0;
        const double v = r < n ? children(r, s) * std::pow(d, -r - 1) / n : 0.0;
        diffs.push_back(std::abs(w - v));
        if (r == n - 1) step.push_back(std::abs(std::pow(d, -r) - children(r, s) * std::pow(d, -r - 1)));
      }
    L.defect = pairwise_sum(diffs);
    L.step_defect = pairwise_sum(step);
    out.push_back(L);
  }
  return out;
}

void web_marginal(const BranchTree& tree, int n, std::size_t lambda_i, std::vector<ProjPoint>& values,
                  std::vector<double>& weights) {
  if (lambda_i >= tree.ball.lambdas.size()) throw LabError(ErrorKind::InvalidArgument, "D0 index out of range");
  values.clear();
  weights.clear();
  for (const auto& a : cesaro_web(tree, n).atoms) {
    values.push_back(tree.value(a.level, a.branch, tree.ball.index(lambda_i, static_cast<std::size_t>(a.z_index))));
    weights.push_back(a.weight);
  }
}

std::vector<AcriticalityLevel> acriticality_check(const FamilySpec& family, const BranchTree& tree,
                                                  const std::vector<LineSample>& lines, int p_max, double tol) {
  if (p_max < 0 || !(tol > 0.0)) throw LabError(ErrorKind::InvalidArgument, "bad acriticality parameters");
  const int N = static_cast<int>(tree.S.size()) - 1;
  const double d = tree.d;
  const auto& lam = tree.ball.lambdas;
  std::vector<PostcriticalLifts> pc;
  for (Complex l : lam) pc.push_back(postcritical_lifts(family, l, p_max));

  // near[r][slot][k] bit p: atom (r, s, z_k) passes within tol of Y_p on the D0 grid.
  const std::size_t nz = tree.ball.zs.size();
  std::vector<std::vector<std::vector<unsigned>>> near(static_cast<std::size_t>(N + 1));
  for (int r = 1; r <= N; ++r) {
    const auto& S = tree.S[static_cast<std::size_t>(r)];
    auto& nr = near[static_cast<std::size_t>(r)];
    nr.assign(S.size(), std::vector<unsigned>(nz, 0u));
    parallel_for(S.size(), [&](std::size_t slot) {
      for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t i = 0; i < lam.size(); ++i) {
          const HVec& w = tree.ball_values[static_cast<std::size_t>(r)][slot][tree.ball.index(i, k)].lift();
          for (int p = 0; p <= p_max; ++p)
            for (const auto& g : pc[i].points[static_cast<std::size_t>(p)])
              if (fs_distance(w, g) < tol) nr[slot][k] |= 1u << p;
        }
    });
  }

  // Sliced masses on the tau r discs of the good lines.
  std::vector<const LineSample*> good;
  for (const auto& l : lines)
    if (l.good) good.push_back(&l);
  const double rho = tree.opts.tau * tree.r;
  std::vector<std::vector<int>> counts(good.size());
  parallel_for(good.size(), [&](std::size_t li) {
    bool failed = false;
    counts[li] = slice_counts(family, tree.base, good[li]->dir_lambda, good[li]->dir_z, rho, N + p_max, &failed);
  });

  std::vector<AcriticalityLevel> out;
  for (int n = 1; n <= N; ++n) {
    AcriticalityLevel L;
    L.n = n;
    L.estimate.assign(static_cast<std::size_t>(p_max + 1), 0.0);
    for (int p = 0; p <= p_max; ++p) {
      std::vector<double> w;
      for (int r = 1; r <= n; ++r) {
        const double a = std::pow(d, -r) / (static_cast<double>(n) * nz);
        for (const auto& slot : near[static_cast<std::size_t>(r)])
          for (unsigned bits : slot)
            if (bits & (1u << p)) w.push_back(a);
      }
      L.estimate[static_cast<std::size_t>(p)] = pairwise_sum(w);
      std::vector<double> sliced;
      for (const auto& c : counts) sliced.push_back(std::pow(d, p) * std::pow(d, -(n + p)) * c[static_cast<std::size_t>(n + p)]);
      const auto ms = mean_se(sliced);
      L.bound_mean.push_back(ms.mean);
      L.bound_se.push_back(ms.se);
    }
    out.push_back(L);
  }
  return out;
}

}  // namespace stablab
