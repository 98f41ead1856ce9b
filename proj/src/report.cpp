#include "stablab/report.hpp"

#include <algorithm>
#include <iomanip>

#include "stablab/parallel.hpp"

namespace stablab {

double AgreementReport::min_pairwise() const {
  return std::min({laplacian_vs_growth, laplacian_vs_ramification, growth_vs_ramification});
}

AgreementReport agreement_report(const FamilySpec& family, const AgreementOptions& opts) {
  AgreementReport rep;
  rep.opts = opts;
  rep.grid = ParamGrid{opts.rect, opts.n, opts.n};
  const ParamGrid& g = rep.grid;
  const ParamGrid padded{{g.rect.re_min - g.dx(), g.rect.re_max + g.dx(), g.rect.im_min - g.dy(), g.rect.im_max + g.dy()},
                         g.nx + 2, g.ny + 2};
  EstimatorParams ep;
  ep.depth = opts.green_depth;
  const auto raster = lyapunov_raster(family, padded, Estimator::GreenFormula, ep);
  const auto oracle = escape_time_quadratic(g, opts.oracle_iter);

  rep.cells.resize(g.size());
  parallel_for(g.size(), [&](std::size_t i) {
    const int ix = static_cast<int>(i % g.nx), iy = static_cast<int>(i / g.nx);
    AgreementCell& cell = rep.cells[i];
    cell.lambda = g.at(ix, iy);
    cell.laplacian = raster.laplacian[padded.index(ix + 1, iy + 1)];
    cell.laplacian_stable = std::abs(cell.laplacian) < opts.tau1;
    const Rect box{cell.lambda.real() - g.dx() / 2, cell.lambda.real() + g.dx() / 2,
                   cell.lambda.imag() - g.dy() / 2, cell.lambda.imag() + g.dy() / 2};
    const auto fit = mass_growth_rate(family, ParamRegion::box(box), opts.mass_n_max, opts.eps_fit, opts.quad);
    cell.rho = fit.rho;
    cell.growth_stable = fit.stable;
    const auto series =
        ramification_series(family, {ParamRegion::box(box), opts.phase}, opts.ram_n_max, opts.quad, opts.thresholds);
    cell.ramification = series.verdict;
    cell.ramification_stable = series.verdict == MassSeries::Verdict::Converged;
    cell.inside = oracle.inside[i];
    cell.oracle_distance = oracle.distance[i];
    cell.counted = oracle.distance[i] >= opts.margin && std::isfinite(cell.laplacian);
  });

  int a12 = 0, a13 = 0, a23 = 0, all = 0;
  for (const auto& c : rep.cells) {
    if (!c.counted) continue;
    ++rep.counted;
    a12 += c.laplacian_stable == c.growth_stable;
    a13 += c.laplacian_stable == c.ramification_stable;
    a23 += c.growth_stable == c.ramification_stable;
    all += c.laplacian_stable == c.growth_stable && c.growth_stable == c.ramification_stable;
  }
  const double n = std::max(1, rep.counted);
  rep.laplacian_vs_growth = a12 / n;
  rep.laplacian_vs_ramification = a13 / n;
  rep.growth_vs_ramification = a23 / n;
  rep.all_three = all / n;
  return rep;
}

void write_agreement_csv(std::ostream& os, const AgreementReport& report) {
  os << "re,im,laplacian,rho,ramification,laplacian_stable,growth_stable,ramification_stable,inside,"
        "oracle_distance,counted\n";
  os << std::setprecision(17);
  for (const auto& c : report.cells)
    os << c.lambda.real() << ',' << c.lambda.imag() << ',' << c.laplacian << ',' << c.rho << ','
       << to_string(c.ramification) << ',' << c.laplacian_stable << ',' << c.growth_stable << ','
       << c.ramification_stable << ',' << c.inside << ',' << c.oracle_distance << ',' << c.counted << '\n';
}

}  // namespace stablab
