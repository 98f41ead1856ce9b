#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "stablab/family.hpp"

namespace stablab {

struct RepellingCycle {
  int period = 0;
  std::vector<ProjPoint> points;
  Complex multiplier;            // product of one-step chart derivatives
  double one_step_log_jac_sum = 0.0;  // sum of log|Jac_FS| along the cycle
};

struct CycleSet {
  int n = 0;
  std::vector<RepellingCycle> cycles;  // repelling cycles only
  int roots = 0;                  // d^n + 1 fixed points of f^n, with multiplicity
  int non_repelling = 0;          // points on attracting or indifferent cycles
  int ill_conditioned = 0;        // points excluded by the condition-number test
  double max_residual = 0.0;      // max FS distance between f^n(z) and z
  bool julia_filter_applied = false;

  int repelling_points() const;
};

/// Fixed points of f^n on P^1 (k = 1), grouped into cycles. Periodic roots
/// come from the degree d^n + 1 form det[z, F^n(z)] evaluated by iterating
/// the lift, never by expanding f^n. Throws RootBudget when d^n > 2^16.
CycleSet repelling_cycles(const FamilySpec& family, Complex lambda, int n);
CycleSet repelling_cycles(const FrozenMap& map, int n);

struct ApproxLyapunov {
  double value = 0.0;
  int points_used = 0;
  int excluded = 0;
};

/// d^{-n} sum over repelling n-periodic points of log|Jac_FS|. No Julia-set
/// membership test is made.
ApproxLyapunov approx_lyapunov(const FamilySpec& family, Complex lambda, int n);
ApproxLyapunov approx_lyapunov(const FrozenMap& map, int n);

/// log d + sum of the Green function over the finite critical points of a
/// polynomial family (lift normalized to w^d). Throws NotPolynomial otherwise.
double green_formula_lyapunov(const FamilySpec& family, Complex lambda, int depth);

enum class Estimator { GreenFormula, Approximation, Birkhoff };
const char* to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

struct EstimatorParams {
  int depth = 60;          // Green formula
  int period = 8;          // approximation formula
  int n_points = 512;      // Birkhoff
  int n_iter = 100;
  int sample_depth = 30;
  std::uint64_t seed = 1;
};

double estimate_lyapunov(const FamilySpec& family, Complex lambda, Estimator est,
                         const EstimatorParams& params);

struct LyapunovRaster {
  ParamGrid grid;
  Estimator estimator = Estimator::GreenFormula;
  std::vector<double> values;
  std::vector<double> laplacian;  // per-cell mass (Delta L) * area / (2 pi); NaN off the interior
  int failures = 0;

  bool interior(int ix, int iy) const {
    return ix > 0 && iy > 0 && ix + 1 < grid.nx && iy + 1 < grid.ny;
  }
  double total_mass() const;  // pairwise sum of |laplacian| over interior cells
};

/// Fills the raster cell by cell. Failing cells become NaN; throws
/// FailureBudget when 1% or more of the cells fail.
LyapunovRaster lyapunov_raster(const FamilySpec& family, const ParamGrid& grid, Estimator est,
                               const EstimatorParams& params);

/// Recomputes the five-point Laplacian mass of `values`.
std::vector<double> laplacian_mass(const ParamGrid& grid, const std::vector<double>& values);

void write_raster_csv(std::ostream& os, const LyapunovRaster& raster);

/// Escape-time reference for z^2 + c: a cell is inside when the critical
/// orbit of its centre stays bounded for max_iter steps. A cell is on the
/// boundary when its centre and corners disagree, a side neighbour has the
/// other status, or the escaping centre is certified within half a cell
/// diagonal of the set by the bound 2 |z| log|z| / |dz/dc|.
struct EscapeRaster {
  ParamGrid grid;
  std::vector<char> inside;     // centre sample bounded
  std::vector<char> boundary;   // mixed samples or a neighbour with the other status
  std::vector<int> distance;    // Chebyshev cell distance to the nearest boundary cell

  int distance_at(int ix, int iy) const { return distance[grid.index(ix, iy)]; }
};

EscapeRaster escape_time_quadratic(const ParamGrid& grid, int max_iter, double escape_radius = 2.0);

}  // namespace stablab
