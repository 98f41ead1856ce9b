#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stablab/types.hpp"

namespace stablab {

struct AberthOptions {
  int max_iter = 600;
  double tol = 1e-14;      // relative step size at which a root is frozen
  double init_radius = 1.0;
  double init_phase = 0.4;
};

struct AberthResult {
  std::vector<Complex> roots;
  std::vector<bool> converged;
  int iterations = 0;
  bool all_converged() const;
};

/// Simultaneous Aberth-Ehrlich iteration for the `degree` roots of a function
/// known only through its Newton ratio p/p'. The ratio may return a
/// non-finite value, in which case the iterate is nudged.
AberthResult aberth(int degree, const std::function<Complex(Complex)>& newton_ratio,
                    const AberthOptions& opts = {});

/// All roots of sum_j a[j] x^j (with multiplicity). Leading zeros are trimmed;
/// throws RootFinding when every coefficient vanishes.
std::vector<Complex> polynomial_roots(std::span<const Complex> ascending, double zero_tol = 0.0);

Complex horner(std::span<const Complex> ascending, Complex x);

struct RootCluster {
  Complex value;
  int multiplicity = 1;
};

/// Groups roots closer than tol in chordal distance (single linkage).
std::vector<RootCluster> cluster_roots(std::span<const Complex> roots, double tol);

double chordal(Complex a, Complex b);

/// A fixed unitary change of coordinates on C^2. Solving in the chart
/// x -> U (x, 1) keeps every root finite unless it sits exactly at U e_0,
/// so degree bookkeeping at infinity is never needed.
struct ChartRotation {
  Complex a{0.8253356149096783, 0.0};
  Complex b{-0.5401786062357716, 0.1647664227209727};

  HVec apply(Complex x) const;   // U (x, 1)
  HVec direction() const;        // d/dx U (x, 1)
  Complex inverse(const HVec& z) const;  // chart coordinate of [z]
};

/// Roots on P^1 of a homogeneous form of known degree, given its value and
/// gradient. Returns the points with multiplicity.
std::vector<HVec> projective_roots(int degree,
                                   const std::function<void(const HVec&, Complex&, HVec&)>& form,
                                   const AberthOptions& opts, bool* all_converged = nullptr);

}  // namespace stablab
