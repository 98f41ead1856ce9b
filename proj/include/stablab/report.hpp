#pragma once

#include <ostream>
#include <vector>

#include "stablab/lyapunov.hpp"
#include "stablab/postcritical.hpp"

namespace stablab {

/// Three stability verdicts per cell of a parameter grid, compared away from
/// the escape-time boundary of z^2 + c.
struct AgreementOptions {
  Rect rect{-2.5, 1.5, -2.0, 2.0};
  int n = 64;
  double tau1 = 1e-4;         // Laplacian mass per cell
  int green_depth = 60;
  int mass_n_max = 12;
  double eps_fit = 0.02;      // growth rate
  int ram_n_max = 12;
  PhaseRegion phase = PhaseRegion::disc(0.0, 1.0);
  int margin = 2;             // cells counted at oracle distance >= margin
  int oracle_iter = 1000;
  QuadratureOptions quad;
  VerdictThresholds thresholds;
};

struct AgreementCell {
  Complex lambda;
  double laplacian = 0.0;
  double rho = 0.0;
  MassSeries::Verdict ramification = MassSeries::Verdict::Inconclusive;
  bool laplacian_stable = false;
  bool growth_stable = false;
  bool ramification_stable = false;
  bool inside = false;        // escape-time oracle
  int oracle_distance = 0;
  bool counted = false;
};

struct AgreementReport {
  ParamGrid grid;
  AgreementOptions opts;
  std::vector<AgreementCell> cells;
  int counted = 0;
  double laplacian_vs_growth = 0.0;
  double laplacian_vs_ramification = 0.0;
  double growth_vs_ramification = 0.0;
  double all_three = 0.0;
  double min_pairwise() const;
};

/// The Laplacian is taken on a grid padded by one cell, so every cell of the
/// n x n grid has a five-point stencil; U is the cell itself.
AgreementReport agreement_report(const FamilySpec& family, const AgreementOptions& opts);

void write_agreement_csv(std::ostream& os, const AgreementReport& report);

}  // namespace stablab
