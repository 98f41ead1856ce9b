// stability-lab: batch front end over the stability analyses.
//
//   stability-lab <command> --config <file.json> --out <dir> [--threads N]
//
// Every numeric parameter comes from the JSON config; flags only pick paths,
// the command and the worker count (which never changes the outputs).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "stablab/io.hpp"
#include "stablab/lyapunov.hpp"
#include "stablab/misiurewicz.hpp"
#include "stablab/parallel.hpp"
#include "stablab/postcritical.hpp"
#include "stablab/report.hpp"
#include "stablab/webbuilder.hpp"

namespace fs = std::filesystem;
using namespace stablab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

struct Run {
  std::string command;
  Json config;       // validated, family resolved inline
  FamilySpec family;
  std::string hash;
  std::optional<std::uint64_t> seed;
  fs::path out;

  Json section() const { return config.value(command, Json::object()); }
  Json meta() const {
    return {{"tool", "stability-lab"},
            {"command", command},
            {"config_hash", hash},
            {"seed", seed ? Json(*seed) : Json(nullptr)}};
  }
  std::uint64_t require_seed() const {
    if (!seed) throw LabError(ErrorKind::Config, "command '" + command + "' is stochastic and needs \"seed\"");
    return *seed;
  }
  std::ofstream open(const std::string& name) const {
    std::ofstream os(out / name, std::ios::binary);
    if (!os) throw LabError(ErrorKind::Config, "cannot write " + (out / name).string());
    return os;
  }
  std::vector<std::string> pgm_comments() const {
    return {"stability-lab " + command, "config_hash " + hash, "seed " + (seed ? std::to_string(*seed) : "none")};
  }
};

FamilySpec resolve_family(const Json& j, const fs::path& config_dir) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "quadratic") return FamilySpec::quadratic();
    fs::path p(s);
    if (p.is_relative()) p = config_dir / p;
    return resolve_family(read_json_file(p), p.parent_path());
  }
  if (j.contains("preset")) {
    const std::string name = j["preset"].get<std::string>();
    if (name == "quadratic") return FamilySpec::quadratic();
    if (name == "power") return FamilySpec::power(j.value("d", 2));
    throw LabError(ErrorKind::Config, "unknown family preset '" + name + "'");
  }
  return family_from_json(j);
}

ParamRegion region_from_json(const Json& j, const ParamRegion& fallback) {
  if (j.contains("rect")) return ParamRegion::box(rect_from_json(j["rect"]));
  if (j.contains("disc")) return ParamRegion::disc(complex_from_json(j["disc"]["center"]), j["disc"]["radius"].get<double>());
  return fallback;
}

PhaseRegion phase_from_json(const Json& j, const PhaseRegion& fallback) {
  if (j.value("all", false)) return PhaseRegion::all();
  if (j.contains("disc")) return PhaseRegion::disc(complex_from_json(j["disc"]["center"]), j["disc"]["radius"].get<double>());
  return fallback;
}

Json region_json(const ParamRegion& U) {
  if (U.shape == ParamRegion::Shape::Rect) return {{"shape", "rect"}, {"rect", to_json(U.rect)}};
  return {{"shape", "disc"}, {"center", complex_json(U.center)}, {"radius", U.radius}};
}

Json phase_json(const PhaseRegion& B) {
  if (B.whole) return {{"whole", true}};
  return {{"whole", false}, {"center", complex_json(B.center)}, {"radius", B.radius}};
}

Json grid_json(const ParamGrid& g) { return {{"rect", to_json(g.rect)}, {"nx", g.nx}, {"ny", g.ny}}; }

QuadratureOptions quadrature_from_json(const Json& j) {
  QuadratureOptions q;
  if (j.value("method", "boundary") == "midpoint") q.method = QuadratureOptions::Method::Midpoint;
  q.base = j.value("base", q.base);
  q.max_level = j.value("max_level", q.max_level);
  q.variation = j.value("variation", q.variation);
  q.floor = j.value("floor", q.floor);
  q.boundary_tol = j.value("boundary_tol", q.boundary_tol);
  return q;
}

ParamGrid grid_from_section(const Json& s, int default_side) {
  const Rect r = s.contains("rect") ? rect_from_json(s["rect"]) : Rect{-2.5, 1.5, -2.0, 2.0};
  return {r, s.value("nx", default_side), s.value("ny", default_side)};
}

// [min, max] over finite entries, nulls when there are none.
Json finite_range(const std::vector<double>& xs) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : xs)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (!(lo <= hi)) return Json::array({nullptr, nullptr});
  return Json::array({lo, hi});
}

void emit(const Run& run, const std::string& name, const Json& report) {
  const auto errors = validate_schema(report, published_schema(run.command));
  if (!errors.empty()) throw std::logic_error("report does not match its schema: " + errors.front());
  write_json_file(run.out / name, report);
}

int cmd_lyap(const Run& run) {
  const Json s = run.section();
  const ParamGrid grid = grid_from_section(s, 64);
  const Estimator est = estimator_from_string(s.value("estimator", "green"));
  EstimatorParams ep;
  ep.depth = s.value("depth", ep.depth);
  ep.period = s.value("period", ep.period);
  ep.n_points = s.value("n_points", ep.n_points);
  ep.n_iter = s.value("n_iter", ep.n_iter);
  ep.sample_depth = s.value("sample_depth", ep.sample_depth);
  if (est == Estimator::Birkhoff) ep.seed = run.require_seed();
  const auto raster = lyapunov_raster(run.family, grid, est, ep);

  auto csv = run.open("lyap.csv");
  write_raster_csv(csv, raster);
  const Json vr = finite_range(raster.values), lr = finite_range(raster.laplacian);
  auto pgm = run.open("lyap.pgm");
  write_pgm16(pgm, raster.values, grid.nx, grid.ny, vr[0].is_null() ? 0.0 : vr[0].get<double>(),
              vr[1].is_null() ? 1.0 : vr[1].get<double>(), run.pgm_comments());
  std::vector<double> abs_lap(raster.laplacian.size());
  double top = 0.0;
  for (std::size_t i = 0; i < abs_lap.size(); ++i) {
    abs_lap[i] = std::abs(raster.laplacian[i]);
    if (std::isfinite(abs_lap[i])) top = std::max(top, abs_lap[i]);
  }
  auto lap = run.open("laplacian.pgm");
  write_pgm16(lap, abs_lap, grid.nx, grid.ny, 0.0, top > 0.0 ? top : 1.0, run.pgm_comments());

  emit(run, "lyap.json",
       {{"meta", run.meta()},
        {"grid", grid_json(grid)},
        {"estimator", to_string(est)},
        {"failures", raster.failures},
        {"total_mass", raster.total_mass()},
        {"value_range", vr},
        {"laplacian_range", lr},
        {"files", {"lyap.csv", "lyap.pgm", "laplacian.pgm"}}});
  std::cout << "lyap: " << grid.nx << "x" << grid.ny << " cells, total |laplacian| mass " << raster.total_mass() << "\n";
  return 0;
}

int cmd_bif(const Run& run) {
  const Json s = run.section();
  const ParamGrid grid = grid_from_section(s, 64);
  EstimatorParams ep;
  ep.depth = s.value("depth", ep.depth);
  const double tau1 = s.value("tau1", 1e-4);
  const auto raster = lyapunov_raster(run.family, grid, Estimator::GreenFormula, ep);

  std::vector<double> flag(grid.size(), 0.0);
  int count = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(raster.laplacian[i]) > tau1) {
      flag[i] = 1.0;
      ++count;
    }
  auto pgm = run.open("bif.pgm");
  write_pgm16(pgm, flag, grid.nx, grid.ny, 0.0, 1.0, run.pgm_comments());

  Json report{{"meta", run.meta()},
              {"grid", grid_json(grid)},
              {"tau1", tau1},
              {"bifurcation_cells", count},
              {"total_mass", raster.total_mass()},
              {"failures", raster.failures},
              {"files", {"bif.csv", "bif.pgm"}}};
  std::optional<EscapeRaster> oracle;
  if (s.contains("oracle_iter")) {
    const int margin = s.value("margin", 2);
    oracle = escape_time_quadratic(grid, s["oracle_iter"].get<int>());
    int near = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) near += flag[i] > 0.0 && oracle->distance[i] <= margin;
    report["oracle"] = {{"max_iter", s["oracle_iter"]},
                        {"margin", margin},
                        {"near_boundary", near},
                        {"fraction_near_boundary", count ? static_cast<double>(near) / count : 1.0}};
  }
  auto csv = run.open("bif.csv");
  csv << "re,im,laplacian,bifurcation" << (oracle ? ",oracle_distance" : "") << "\n" << std::setprecision(17);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Complex c = grid.at(i);
    csv << c.real() << ',' << c.imag() << ',' << raster.laplacian[i] << ',' << static_cast<int>(flag[i]);
    if (oracle) csv << ',' << oracle->distance[i];
    csv << '\n';
  }
  emit(run, "bif.json", report);
  std::cout << "bif: " << count << " cells above tau1 = " << tau1 << "\n";
  return 0;
}

int cmd_mass(const Run& run) {
  const Json s = run.section();
  const ParamRegion U = region_from_json(s.value("region", Json::object()), ParamRegion::disc(0.0, 0.1));
  const int n_max = s.value("n_max", 12);
  const double eps_fit = s.value("eps_fit", 0.02);
  const auto fit = mass_growth_rate(run.family, U, n_max, eps_fit, quadrature_from_json(s.value("quadrature", Json::object())));

  auto csv = run.open("mass.csv");
  csv << "n,mass\n" << std::setprecision(17);
  for (std::size_t n = 0; n < fit.masses.size(); ++n) csv << n << ',' << fit.masses[n] << '\n';
  emit(run, "mass.json",
       {{"meta", run.meta()},
        {"region", region_json(U)},
        {"n_max", n_max},
        {"masses", fit.masses},
        {"rho", fit.rho},
        {"residual", fit.residual},
        {"eps_fit", eps_fit},
        {"stable", fit.stable},
        {"under_resolved", fit.under_resolved}});
  std::cout << "mass: rho = " << fit.rho << (fit.stable ? " (stable)" : " (not stable)") << "\n";
  return 0;
}

int cmd_ram(const Run& run) {
  const Json s = run.section();
  const ParamRegion U = region_from_json(s.value("region", Json::object()), ParamRegion::disc(0.0, 0.05));
  const PhaseRegion B = phase_from_json(s.value("phase", Json::object()), PhaseRegion::disc(0.0, 1.0));
  const int n_max = s.value("n_max", 20);
  const auto quad = quadrature_from_json(s.value("quadrature", Json::object()));
  VerdictThresholds th;
  const Json jt = s.value("thresholds", Json::object());
  th.converged_ratio = jt.value("converged_ratio", th.converged_ratio);
  th.diverging_ratio = jt.value("diverging_ratio", th.diverging_ratio);
  th.tail = jt.value("tail", th.tail);

  const auto series = ramification_series(run.family, {U, B}, n_max, quad, th);
  auto csv = run.open("ram.csv");
  write_series_csv(csv, series);
  Json report{{"meta", run.meta()},
              {"window", {{"U", region_json(U)}, {"B", phase_json(B)}}},
              {"per_n", series.per_n},
              {"partial_sums", series.partial_sums},
              {"verdict", to_string(series.verdict)},
              {"fit", {{"rate", series.rate}, {"residual", series.residual}}},
              {"tail_bound", series.tail_bound},
              {"under_resolved", series.under_resolved}};

  if (s.contains("scan")) {
    const Json& sc = s["scan"];
    const ParamGrid grid{rect_from_json(sc["rect"]), sc["nx"].get<int>(), sc["ny"].get<int>()};
    std::vector<MassSeries> cells(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
      const Complex c = grid.at(i);
      const Rect box{c.real() - grid.dx() / 2, c.real() + grid.dx() / 2, c.imag() - grid.dy() / 2,
                     c.imag() + grid.dy() / 2};
      cells[i] = ramification_series(run.family, {ParamRegion::box(box), B}, n_max, quad, th);
    });
    int counts[3] = {0, 0, 0};
    std::vector<double> level(grid.size());
    auto scsv = run.open("ram_scan.csv");
    scsv << "re,im,verdict,rate\n" << std::setprecision(17);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto v = cells[i].verdict;
      ++counts[static_cast<int>(v)];
      level[i] = v == MassSeries::Verdict::Converged ? 0.0 : v == MassSeries::Verdict::Diverging ? 1.0 : 0.5;
      scsv << grid.at(i).real() << ',' << grid.at(i).imag() << ',' << to_string(v) << ',' << cells[i].rate << '\n';
    }
    auto pgm = run.open("ram_scan.pgm");
    write_pgm16(pgm, level, grid.nx, grid.ny, 0.0, 1.0, run.pgm_comments());
    report["scan"] = {{"grid", grid_json(grid)},
                      {"converged", counts[static_cast<int>(MassSeries::Verdict::Converged)]},
                      {"diverging", counts[static_cast<int>(MassSeries::Verdict::Diverging)]},
                      {"inconclusive", counts[static_cast<int>(MassSeries::Verdict::Inconclusive)]}};
  }
  emit(run, "ram.json", report);
  std::cout << "ram: verdict " << to_string(series.verdict) << ", fitted ratio " << series.rate << "\n";
  return 0;
}

int cmd_web(const Run& run) {
  const Json s = run.section();
  const std::uint64_t seed = run.require_seed();
  BaseOptions bo;
  bo.n_scan = s.value("n_scan", bo.n_scan);
  bo.clearance = s.value("clearance", bo.clearance);
  bo.seed = seed;
  const BasePoint base = pick_base(run.family, complex_from_json(s.value("lambda0", Json(0.05))),
                                   complex_from_json(s.value("z0", Json::array({0.2, 0.3}))), bo);
  TreeOptions to;
  to.tau = s.value("tau", to.tau);
  to.eps = s.value("eps", to.eps);
  to.n_max = s.value("n_max", to.n_max);
  to.delta_crit = s.value("delta_crit", to.delta_crit);
  to.n_z = s.value("n_z", to.n_z);
  to.seed = seed;
  const double r = s.value("r", 0.1);
  const int p_max = s.value("p_max", 3);
  const auto lines = good_lines(run.family, base, r, to.eps, s.value("line_depth", 25), s.value("n_lines", 32), seed);
  const auto tree = build_branch_tree(run.family, base, r, lines, to);
  const auto levels = build_web(tree);
  const auto acr = acriticality_check(run.family, tree, lines, p_max, s.value("tol", 1e-3));

  Json jl = Json::array();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& L = levels[i];
    Json est = Json::array(), bound = Json::array();
    for (const auto& A : acr)
      if (A.n == L.n) {
        est = A.estimate;
        bound = A.bound_mean;
      }
    jl.push_back({{"n", L.n},
                  {"fiber_size", L.fiber_size},
                  {"S_size", L.s_size},
                  {"mass", L.mass},
                  {"cesaro_mass", L.cesaro_mass},
                  {"defect", L.defect},
                  {"step_defect", L.step_defect},
                  {"defect_bound", 3.0 / L.n},
                  {"Yp_estimates", est},
                  {"Yp_bounds", bound}});
  }
  const WebSample top = cesaro_web(tree, to.n_max);
  auto csv = run.open("web_atoms.csv");
  csv << "level,branch,lambda_index,z_index,weight,lambda_re,lambda_im,re,im\n" << std::setprecision(17);
  for (const auto& a : top.atoms)
    for (std::size_t li = 0; li < tree.ball.lambdas.size(); ++li) {
      const Complex v = tree.value(a.level, a.branch, tree.ball.index(li, static_cast<std::size_t>(a.z_index))).affine_value();
      csv << a.level << ',' << a.branch << ',' << li << ',' << a.z_index << ',' << a.weight << ','
          << tree.ball.lambdas[li].real() << ',' << tree.ball.lambdas[li].imag() << ',' << v.real() << ',' << v.imag()
          << '\n';
    }
  emit(run, "web.json",
       {{"meta", run.meta()},
        {"base", {{"lambda", complex_json(base.lambda)}, {"z", complex_json(base.z)}, {"clearance", base.clearance}}},
        {"r", r},
        {"tau", to.tau},
        {"eps", to.eps},
        {"n_lines", tree.n_lines},
        {"n_good_lines", tree.n_good_lines},
        {"semiconjugacy_residual", tree.semiconjugacy_residual},
        {"fiber_residual", tree.fiber_residual},
        {"max_children", tree.max_children},
        {"levels", jl}});
  std::cout << "web: " << levels.size() << " levels, |S_" << to.n_max << "| = " << tree.S.back().size() << "\n";
  return 0;
}

int cmd_misiu(const Run& run) {
  const Json s = run.section();
  const std::uint64_t seed = run.require_seed();
  const Rect rect = s.contains("rect") ? rect_from_json(s["rect"]) : Rect{-2.2, 0.6, -1.2, 1.2};
  const int q = s.value("q", 3), p = s.value("p", 2), n_starts = s.value("n_starts", 32);
  const double radius_cells = s.value("radius_cells", 2.0), tau1 = s.value("tau1", 1e-4);
  const auto hits = find_misiurewicz(run.family, rect, q, p, n_starts, seed);

  const Json jr = s.value("raster", Json::object());
  EstimatorParams ep;
  ep.depth = jr.value("depth", ep.depth);
  const auto raster = lyapunov_raster(run.family, grid_from_section(jr, 256), Estimator::GreenFormula, ep);

  Json jh = Json::array();
  bool all_in = true;
  for (const auto& h : hits) {
    const double mass = laplacian_mass_near(h.lambda, raster, radius_cells);
    all_in = all_in && mass > tau1;
    jh.push_back({{"lambda", complex_json(h.lambda)},
                  {"q", h.q},
                  {"p", h.p},
                  {"residual", h.residual},
                  {"transversality", h.transversality},
                  {"multiplier_modulus", h.multiplier_modulus},
                  {"cycle_point", complex_json(h.cycle_point)},
                  {"laplacian_mass", mass},
                  {"in_bifurcation", mass > tau1}});
  }
  auto csv = run.open("misiu.csv");
  write_hits_csv(csv, hits);
  emit(run, "misiu.json",
       {{"meta", run.meta()},
        {"definition", "one-parameter transversal collision f^q(c) = w(lambda), w repelling of exact period p"},
        {"rect", to_json(rect)},
        {"q", q},
        {"p", p},
        {"n_starts", n_starts},
        {"radius_cells", radius_cells},
        {"tau1", tau1},
        {"hits", jh},
        {"all_in_bifurcation", all_in}});
  std::cout << "misiu: " << hits.size() << " hits, all in the bifurcation raster: " << (all_in ? "yes" : "no") << "\n";
  return 0;
}

int cmd_report(const Run& run) {
  const Json s = run.section();
  AgreementOptions o;
  if (s.contains("rect")) o.rect = rect_from_json(s["rect"]);
  o.n = s.value("n", o.n);
  o.tau1 = s.value("tau1", o.tau1);
  o.eps_fit = s.value("eps_fit", o.eps_fit);
  o.green_depth = s.value("depth", o.green_depth);
  o.mass_n_max = s.value("mass_n_max", o.mass_n_max);
  o.ram_n_max = s.value("ram_n_max", o.ram_n_max);
  o.phase = phase_from_json(s.value("phase", Json::object()), o.phase);
  o.margin = s.value("margin", o.margin);
  o.oracle_iter = s.value("oracle_iter", o.oracle_iter);
  const double required = s.value("required_agreement", 0.95);
  const auto rep = agreement_report(run.family, o);

  auto csv = run.open("report.csv");
  write_agreement_csv(csv, rep);
  const bool pass = rep.min_pairwise() >= required;
  emit(run, "report.json",
       {{"meta", run.meta()},
        {"grid", grid_json(rep.grid)},
        {"thresholds", {{"tau1", o.tau1}, {"eps_fit", o.eps_fit}, {"margin", o.margin}}},
        {"counted", rep.counted},
        {"agreement",
         {{"laplacian_vs_growth", rep.laplacian_vs_growth},
          {"laplacian_vs_ramification", rep.laplacian_vs_ramification},
          {"growth_vs_ramification", rep.growth_vs_ramification},
          {"all_three", rep.all_three}}},
        {"required_agreement", required},
        {"pass", pass}});
  std::cout << "report: " << rep.counted << " cells, pairwise agreement >= " << rep.min_pairwise()
            << (pass ? " (pass)" : " (below requirement)") << "\n";
  return 0;
}

void print_error(const std::string& kind, const std::string& message, const std::vector<std::string>& details = {}) {
  Json j{{"error", kind}, {"message", message}};
  if (!details.empty()) j["details"] = details;
  std::cerr << j.dump() << "\n";
}

Run prepare(const std::string& command, const fs::path& config_path, const fs::path& out) {
  Run run;
  run.command = command;
  run.out = out;
  const Json raw = read_json_file(config_path);
  const auto errors = validate_schema(raw, published_schema("config"));
  if (!errors.empty()) {
    print_error("config", "configuration does not match the published schema", errors);
    throw LabError(ErrorKind::Config, "");
  }
  run.family = resolve_family(raw["family"], config_path.parent_path());
  run.config = raw;
  run.config["family"] = to_json(run.family);
  run.hash = hex64(fnv1a64(run.config.dump()));
  if (raw.contains("seed")) run.seed = raw["seed"].get<std::uint64_t>();
  fs::create_directories(out);
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stability-lab: stability analyses for holomorphic families"};
  app.require_subcommand(1);
  std::string config, out;
  int threads = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"lyap", "Lyapunov raster and its Laplacian"},
      {"bif", "thresholded bifurcation raster"},
      {"mass", "post-critical mass growth rate"},
      {"ram", "ramification series and verdict scan"},
      {"web", "branch tree, equilibrium web, defects and acriticality"},
      {"misiu", "Misiurewicz parameters and their bifurcation membership"},
      {"report", "agreement table of the three stability criteria"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--threads", threads, "worker threads (default: STABILITY_LAB_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);

  if (threads == 0) {
    if (const char* env = std::getenv("STABILITY_LAB_THREADS")) threads = std::atoi(env);
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  set_thread_count(threads);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Run run = prepare(command, config, out);
    if (command == "lyap") return cmd_lyap(run);
    if (command == "bif") return cmd_bif(run);
    if (command == "mass") return cmd_mass(run);
    if (command == "ram") return cmd_ram(run);
    if (command == "web") return cmd_web(run);
    if (command == "misiu") return cmd_misiu(run);
    return cmd_report(run);
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::Config) {
      if (*e.what()) print_error("config", e.what());
      return kExitConfig;
    }
    print_error(to_string(e.kind()), e.what());
    return kExitRun;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
