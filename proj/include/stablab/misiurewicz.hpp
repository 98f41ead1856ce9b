#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "stablab/lyapunov.hpp"

namespace stablab {

/// A transversal collision lambda -> f^q(c(lambda)) = w(lambda) of a critical
/// orbit with a repelling p-periodic point (one-parameter transversality).
struct MisiurewiczHit {
  Complex lambda;
  int q = 0;
  int p = 0;
  double residual = 0.0;        // |h(lambda)|
  double transversality = 0.0;  // |h'(lambda)|
  double multiplier_modulus = 0.0;
  Complex critical_point;
  Complex cycle_point;
  int start = 0;                // start that produced the hit
};

/// h(lambda) = f^q(c) - w in the affine chart, with c and w continued from
/// the given guesses (nearest critical point, Newton on f^p(w) = w).
struct CollisionValue {
  bool ok = false;
  Complex h;
  Complex dh;
  Complex c;
  Complex w;
  Complex multiplier;  // (f^p)'(w)
};

CollisionValue collision_value(const FamilySpec& family, Complex lambda, Complex critical_guess, Complex cycle_guess,
                               int q, int p);

struct MisiurewiczOptions {
  int max_newton = 60;
  double residual_tol = 1e-9;
  double transversality_tol = 1e-6;
  double dedupe_tol = 1e-8;
};

/// Newton on h from n_starts uniform starts in rect, one run per finite
/// critical point and repelling point of exact period p at the start. Runs
/// whose cycle stops being repelling are discarded. Hits are deduplicated
/// and sorted by (re, im).
std::vector<MisiurewiczHit> find_misiurewicz(const FamilySpec& family, const Rect& rect, int q, int p, int n_starts,
                                             std::uint64_t seed, const MisiurewiczOptions& opts = {});

/// True where the summed |laplacian| within radius_cells (Euclidean, in
/// cells) of the point exceeds tau. Throws OutOfRaster for points off the grid.
std::vector<bool> check_in_bifurcation(const std::vector<Complex>& points, const LyapunovRaster& raster,
                                       double radius_cells, double tau = 1e-4);
std::vector<bool> check_in_bifurcation(const std::vector<MisiurewiczHit>& hits, const LyapunovRaster& raster,
                                       double radius_cells, double tau = 1e-4);

double laplacian_mass_near(Complex point, const LyapunovRaster& raster, double radius_cells);

void write_hits_csv(std::ostream& os, const std::vector<MisiurewiczHit>& hits);

}  // namespace stablab
