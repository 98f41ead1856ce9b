#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "stablab/family.hpp"

namespace stablab {

/// A base point a = (lambda0, z0) in C x C (affine phase coordinate).
struct BasePoint {
  Complex lambda;
  Complex z;
  double clearance = 0.0;  // FS distance at lambda0 from z0 to the scanned post-critical points
  int attempts = 0;
};

struct BaseOptions {
  int n_scan = 30;          // post-critical tracks f^n(f(c)), n = 0..n_scan - 1
  double clearance = 0.05;  // required FS clearance
  double jitter = 0.02;     // radius of the retry perturbation of z0
  int retries = 16;
  std::uint64_t seed = 1;
};

/// FS distance at lambda from z to the points f^{n+1}(c_j), n < n_scan.
double track_clearance(const FamilySpec& family, Complex lambda, Complex z, int n_scan);

/// Accepts (lambda0, z0) when its clearance is large enough, otherwise
/// retries jittered z0. Throws NoClearPoint with the best clearance reached.
BasePoint pick_base(const FamilySpec& family, Complex lambda0, Complex z0, const BaseOptions& opts = {});

/// A complex line through the base, as a unit direction in C^2.
struct LineSample {
  Complex dir_lambda;
  Complex dir_z;
  double radius = 0.0;
  std::vector<int> counts;  // intersections of f^n(f(C)) with the disc, n = 0..N
  double tail_mass = 0.0;   // sum_n d^{-n} counts[n]
  bool good = false;        // tail_mass <= eps and no counting failure
  bool failed = false;
};

/// Zeros inside |t| < radius of t -> track_n(lambda0 + t u) - (z0 + t v),
/// counted by the argument principle, n = 0..n_max. Sets *failed when the
/// winding could not be resolved.
std::vector<int> slice_counts(const FamilySpec& family, const BasePoint& a, Complex dir_lambda, Complex dir_z,
                              double radius, int n_max, bool* failed);

/// n_lines FS-uniform directions with their slice counts.
std::vector<LineSample> good_lines(const FamilySpec& family, const BasePoint& a, double r, double eps, int n_max,
                                   int n_lines, std::uint64_t seed);

double good_fraction(const std::vector<LineSample>& lines);

/// Points of D0 x B0 inside B(a, tau r): D0 and B0 are discs of radius tau r / 2.
struct BallGrid {
  std::vector<Complex> lambdas;  // D0 grid: centre, then rings
  std::vector<Complex> zs;       // B0 samples, the first one is z0
  double radius = 0.0;

  std::size_t size() const { return lambdas.size() * zs.size(); }
  std::size_t index(std::size_t lambda_i, std::size_t z_i) const { return z_i * lambdas.size() + lambda_i; }
};

BallGrid make_ball_grid(const BasePoint& a, double r, double tau, int n_z, std::uint64_t seed);

struct TreeOptions {
  double tau = 0.25;
  double eps = 0.09;
  int n_max = 12;
  double delta_crit = 1e-4;  // FS clearance from critical values along a continuation
  int rings = 8;             // polar grid of each line disc
  int rays = 16;
  int path_steps = 8;        // straight-path continuation to each ball point
  int n_z = 6;               // B0 samples
  std::uint64_t seed = 1;
};

struct BranchTree {
  BasePoint base;
  double r = 0.0;
  TreeOptions opts;
  int d = 2;

  /// fiber[n][s] = a_s^n, with parent s / d (children of s are s d .. s d + d - 1).
  std::vector<std::vector<ProjPoint>> fiber;
  /// line_hits[n][s]: good lines over whose disc branch s continues.
  std::vector<std::vector<int>> line_hits;
  int n_lines = 0;       // all sampled lines
  int n_good_lines = 0;
  std::vector<std::vector<int>> S;        // S_{eps,r,n}, increasing indices
  std::vector<std::vector<int>> S_slot;   // position of s in S[n], or -1
  BallGrid ball;
  /// ball_values[n][S_slot][ball point]
  std::vector<std::vector<std::vector<ProjPoint>>> ball_values;
  double semiconjugacy_residual = 0.0;  // max FS distance between f(gamma_s^n) and gamma_{i(s)}^{n-1}
  double fiber_residual = 0.0;          // max FS distance between f^n(atom value) and z
  int max_children = 0;                 // max |i_n^{-1}(s)| over S

  int parent(int s) const { return s / d; }
  const ProjPoint& value(int n, int s, std::size_t point) const;
};

/// Level-by-level inverse branches over the good lines' discs, the sets S_n
/// and their extension to the ball grid. Throws LevelBudget when
/// d^{n_max} > 2^14 and ExtensionFailure when an S-branch does not extend.
BranchTree build_branch_tree(const FamilySpec& family, const BasePoint& a, double r,
                             const std::vector<LineSample>& lines, const TreeOptions& opts = {});

struct WebAtom {
  int level = 0;
  int branch = 0;
  int z_index = 0;
  double weight = 0.0;
};

/// Cesaro mean M^n = (1/n) sum_{r=1..n} m^r, averaged over the B0 samples.
struct WebSample {
  int n = 0;
  std::vector<WebAtom> atoms;
  double total_weight() const;
};

WebSample cesaro_web(const BranchTree& tree, int n);

struct WebLevel {
  int n = 0;
  long long fiber_size = 0;
  int s_size = 0;
  double mass = 0.0;          // d^{-n} |S_n|
  double cesaro_mass = 0.0;   // ||M^n||
  double defect = 0.0;        // ||M^n - F_* M^n|| (total variation on atoms)
  double step_defect = 0.0;   // ||m^{n-1} - F_* m^n||
};

std::vector<WebLevel> build_web(const BranchTree& tree);

/// Atom values of M^n at the D0 point lambda_i, with weights.
void web_marginal(const BranchTree& tree, int n, std::size_t lambda_i, std::vector<ProjPoint>& values,
                  std::vector<double>& weights);

struct AcriticalityLevel {
  int n = 0;
  std::vector<double> estimate;     // M^n(Y_p), p = 0..p_max
  std::vector<double> bound_mean;   // d^p * mean sliced mass of R_{n+p} on the tau r discs
  std::vector<double> bound_se;
};

/// Weight of the atoms of M^n passing within tol (FS, on the D0 grid) of the
/// post-critical track f^p(f(C)), with the sliced-mass upper bound.
std::vector<AcriticalityLevel> acriticality_check(const FamilySpec& family, const BranchTree& tree,
                                                  const std::vector<LineSample>& lines, int p_max, double tol);

}  // namespace stablab
