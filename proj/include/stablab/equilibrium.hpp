#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "stablab/family.hpp"

namespace stablab {

/// Escape rate d^{-depth} log |F^depth(z^)| of a fixed lift z^ of z. The lift
/// is the affine one (last coordinate 1) when z is finite in that chart,
/// otherwise the max-norm representative.
struct GreenValue {
  double value = 0.0;
  int depth = 0;
  double truncation = 0.0;  // estimated |G - value|, from the last increment
};

GreenValue green(const FrozenMap& map, const ProjPoint& z, int depth);
GreenValue green(const FamilySpec& family, Complex lambda, const ProjPoint& z, int depth);

struct MeasureSample {
  enum class Kind { InverseIteration, Birkhoff };
  Complex lambda;
  std::vector<ProjPoint> points;
  std::vector<double> weights;
  Kind kind = Kind::InverseIteration;
  int depth = 0;
  std::uint64_t seed = 0;
  ProjPoint seed_point;
};

/// n_points samples of the equilibrium measure, each obtained by `depth`
/// uniformly random inverse images of one common seed point (k = 1).
MeasureSample sample_equilibrium(const FamilySpec& family, Complex lambda, int n_points, int depth,
                                 std::uint64_t seed);

struct BirkhoffResult {
  double mean = 0.0;
  double se = 0.0;
  int clipped = 0;          // log terms clipped at the floor
  bool near_critical = false;
};

/// Average of (1/n_iter) sum_j log|Jac f(z_j)| over orbits through the sample
/// points. Each orbit is the forward orbit of a random n_iter-step backward
/// extension of the sample point, so it is exact rather than a numerically
/// escaping forward iteration.
BirkhoffResult birkhoff_lyapunov(const FamilySpec& family, Complex lambda,
                                 const MeasureSample& sample, int n_iter);

constexpr double kLogJacFloor = -40.0;

/// CSV with columns index, re, im, chart. chart 1 means re/im are z0/z1,
/// chart 0 means they are z1/z0 (used near infinity).
void write_sample_csv(std::ostream& os, const MeasureSample& sample);

}  // namespace stablab
