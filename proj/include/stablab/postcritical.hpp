#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "stablab/family.hpp"

namespace stablab {

/// Parameter part U of a product window: a rectangle or a disc.
struct ParamRegion {
  enum class Shape { Rect, Disc };
  Shape shape = Shape::Rect;
  Rect rect;
  Complex center;
  double radius = 0.0;

  static ParamRegion box(const Rect& r);
  static ParamRegion disc(Complex c, double r);

  bool contains(Complex lambda) const;
  Rect bounds() const;
  double area() const;  // exact area of the region
};

/// Phase part B of a product window: all of P^1 or a Euclidean disc in the
/// affine coordinate z0/z1.
struct PhaseRegion {
  bool whole = true;
  Complex center;
  double radius = 0.0;

  static PhaseRegion all() { return {}; }
  static PhaseRegion disc(Complex c, double r) { return {false, c, r}; }

  bool contains(const ProjPoint& z) const;
};

struct Window {
  ParamRegion U;
  PhaseRegion B;
};

struct TrackSample {
  ProjPoint point;
  double speed = 0.0;   // FS norm of d gamma / d lambda
  double weight = 1.0;  // multiplicity
  int slot = 0;         // masses are accumulated per slot
};

/// Evaluates a batch of tracks at one parameter. The number of samples may
/// vary with the parameter; their slots must lie in [0, n_slots).
using TrackFn = std::function<std::vector<TrackSample>(Complex)>;

struct QuadratureOptions {
  /// Boundary: the speed integral is turned into a contour integral over the
  /// boundary of U (Stokes), only the area term uses the midpoint grid.
  /// Midpoint: everything by the adaptive midpoint rule.
  enum class Method { Boundary, Midpoint };
  Method method = Method::Boundary;
  int base = 16;            // midpoint cells per side of the window's bounding box
  int max_level = 4;        // each refinement halves a cell, at most 2^max_level per side
  double variation = 0.5;   // relative change of speed^2 between neighbours that triggers refinement
  double floor = 0.01;      // speed^2 below which changes are ignored
  long long max_boundary_evals = 200000;  // contour evaluations per window
  double boundary_tol = 1e-9;             // relative to the integral of |integrand|
};

struct GraphMasses {
  std::vector<double> masses;  // one per slot
  bool under_resolved = false;
  long long evaluations = 0;
};

/// Masses of the graphs [Gamma_gamma] against omega_M + omega_FS restricted to
/// U x B: area(U and gamma in B) + integral of |gamma'|^2 over that set.
GraphMasses graph_masses(const TrackFn& tracks, int n_slots, const Window& window,
                         const QuadratureOptions& opts = {});

/// The same mass for one stored track; |gamma'| by central differences on
/// the track grid, cells whose centre lies in U contribute.
double graph_mass(const MotionTrack& track, const Window& window, bool* under_resolved = nullptr);

/// Sum over critical points (with multiplicity) of the graph masses of
/// lambda -> f^n(c(lambda)), slot n - n_min for n = n_min..n_max, over the
/// window. Critical points are recomputed at every quadrature parameter; n = 0
/// speeds use a central difference of the critical points themselves.
GraphMasses postcritical_masses(const FamilySpec& family, const Window& window, int n_min, int n_max,
                                const QuadratureOptions& opts = {});

struct VerdictThresholds {
  double converged_ratio = 0.9;
  double diverging_ratio = 0.95;
  double tail = 1e-3;
};

struct MassSeries {
  enum class Verdict { Converged, Diverging, Inconclusive };
  Window window;
  std::vector<double> per_n;
  std::vector<double> partial_sums;
  Verdict verdict = Verdict::Inconclusive;
  double rate = 0.0;       // fitted geometric ratio
  double residual = 0.0;   // RMS residual of the log fit
  double tail_bound = 0.0;
  bool under_resolved = false;
};

const char* to_string(MassSeries::Verdict v);

/// Verdict from a least-squares fit of log per_n over the last half of the terms.
void classify(MassSeries& series, const VerdictThresholds& th = {});

/// per_n = d^{-n} sum_j mass(f^n(f(c_j))) over the window, n = 0..n_max.
MassSeries ramification_series(const FamilySpec& family, const Window& window, int n_max,
                               const QuadratureOptions& quad = {}, const VerdictThresholds& th = {});

/// count phase discs of the given radius with centres uniform in |z| < spread,
/// each at least `clearance` radii away from the n = 0 tracks f(c_j(lambda)),
/// lambda on a 9 x 9 sample of U. Throws NoClearPoint when max_tries draws do
/// not yield enough discs.
std::vector<PhaseRegion> random_phase_balls(const FamilySpec& family, const ParamRegion& U, int count, double radius,
                                            double spread, std::uint64_t seed, double clearance = 1.5,
                                            int max_tries = 10000);

struct GrowthFit {
  std::vector<double> masses;  // ||f^n_* [C_f]|| over U x P^1, n = 0..n_max
  double rho = 0.0;
  double residual = 0.0;
  bool stable = false;         // rho <= eps_fit
  bool under_resolved = false;
};

GrowthFit mass_growth_rate(const FamilySpec& family, const ParamRegion& U, int n_max, double eps_fit = 0.02,
                           const QuadratureOptions& quad = {});

struct MonteCarloMass {
  double mean = 0.0;
  double se = 0.0;
  long long samples = 0;
};

/// FS area of f^n(C_f) for a polynomial skew product on P^2, averaged over
/// the parameter grid points of U (grid_side^2 bounding-box cells, centres in U).
/// C_f is taken as the vertical lines over the critical points of p and the
/// curve dq/dw = 0.
MonteCarloMass montecarlo_mass_k2(const FamilySpec& family, int n, const ParamRegion& U, int n_samples,
                                  std::uint64_t seed, int grid_side = 5);

void write_series_csv(std::ostream& os, const MassSeries& s);

}  // namespace stablab
