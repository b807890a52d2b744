// steering_lab command-line tool.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "steering_lab/steering_lab.hpp"

namespace sl = steering_lab;

namespace {

struct RunConfig {
  double s = 0.983;
  double t = 0.0656;
  int m = 4;
  double r_a = 0.233;
  double r_b = 0.217;
  double eta = 0.52;
  double visibility = 1.0;
  std::string phases;
  double n_max_tol = 1e-9;
  int n_max = 14;
  std::uint64_t seed = 1;
  std::int64_t runs = 200000;
  int threads = 0;
  bool eta_given = false;

  int points = 60;
  double events = 0.0;
  bool oracle = false;
  bool reference = false;

  double precision = 1e-3;
  bool optimize = false;
  int restarts = 10;

  std::string input;
  std::string output;
  std::string mode = "from_fit";
  double r_b_sigma = 0.005;
  bool resample_r_a = false;
  double r_a_sigma = 0.013;
};

std::string num(double v) { return sl::detail::format_number(v); }

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
  return out;
}

std::vector<double> parse_phases(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw sl::ValidationError("malformed phase '" + item + "' in --phases");
    }
  }
  return out;
}

std::vector<double> alice_phases(const RunConfig& c) {
  if (c.phases.empty()) return sl::matched_alice_phases(c.m);
  std::vector<double> p = parse_phases(c.phases);
  if (static_cast<int>(p.size()) != c.m) {
    throw sl::ValidationError("--phases lists " + std::to_string(p.size()) + " phases but --m is " + std::to_string(c.m));
  }
  return p;
}

sl::InequalityFamily family(const RunConfig& c) {
  sl::InequalityFamily f = sl::InequalityFamily::make(c.s, c.t, c.m, c.r_b);
  f.alice_phases = alice_phases(c);
  f.validate();
  return f;
}

sl::ModelConfig model(const RunConfig& c) {
  sl::ModelConfig m;
  m.eta = c.eta;
  m.r_a = c.r_a;
  m.r_b = c.r_b;
  m.visibility = c.visibility;
  m.alice_phases = alice_phases(c);
  m.validate();
  return m;
}

void emit(const RunConfig& c, const std::string& text) {
  if (c.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(c.output);
  if (!out) throw sl::ValidationError("cannot write '" + c.output + "'");
  out << text;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw sl::ValidationError(std::string(name) + " must be > 0");
}

void print_table(std::ostream& os, const char* name, const std::vector<std::array<double, 4>>& rows) {
  for (std::size_t x = 0; x < rows.size(); ++x) {
    os << name << '.' << x + 1 << '=';
    for (int y = 0; y < 4; ++y) os << (y ? " " : "") << num(rows[x][y]);
    os << '\n';
  }
}

int cmd_bound(const RunConfig& c) {
  require_positive(c.n_max_tol, "--n-max-tol");
  const sl::InequalityFamily f = family(c);
  const sl::CoefficientSet coeffs = sl::decompose_g(f);
  const sl::FullSpaceBound full = sl::fullspace_bound(coeffs, f, c.n_max_tol);
  const sl::ProbabilityInequality ineq =
      sl::probability_coefficients(coeffs, f, full.s_max, sl::qubit_bound(f), full.n_max_used);
  std::ostringstream os;
  os << "s=" << num(f.s) << "\nt=" << num(f.t) << "\nm=" << f.m << "\nr_b=" << num(f.r_b) << '\n'
     << "s_max_qubit=" << num(ineq.s_max_qubit) << "\ns_max=" << num(ineq.s_max) << '\n'
     << "n_max_used=" << ineq.n_max_used << "\ndecomposition_residual=" << num(sl::decomposition_residual(coeffs, f))
     << '\n';
  os << "trajectory=";
  for (std::size_t i = 0; i < full.trajectory.size(); ++i) os << (i ? "," : "") << num(full.trajectory[i]);
  os << "\nc0=" << num(ineq.c0) << '\n';
  print_table(os, "c_pp", ineq.c_pp);
  print_table(os, "c_pm", ineq.c_pm);
  print_table(os, "c_mp", ineq.c_mp);
  if (c.reference) os << sl::compare_reference_coefficients().report;
  std::cout << os.str();
  if (!c.output.empty()) {
    std::ofstream out(c.output);
    if (!out) throw sl::ValidationError("cannot write '" + c.output + "'");
    out << sl::export_inequality(ineq, f);
  }
  return 0;
}

int cmd_simulate(const RunConfig& c) {
  const sl::ModelConfig m = model(c);
  const sl::ProbabilityTable table = sl::joint_probabilities(m);
  std::string text = sl::format_table(m, table);
  if (c.oracle) {
    const double dev = table.max_abs_difference(sl::oracle_probabilities(m, c.n_max));
    text += "# oracle_n_max=" + std::to_string(c.n_max) + " oracle_max_deviation=" + num(dev) + '\n';
    std::cerr << "oracle_max_deviation=" << num(dev) << (dev < 1e-6 ? " ok" : " MISMATCH") << '\n';
    emit(c, text);
    return dev < 1e-6 ? 0 : 1;
  }
  emit(c, text);
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  const sl::ModelConfig m = model(c);
  const std::vector<sl::SweepPoint> sweep = sl::phase_sweep(m, sl::uniform_phases(c.points));
  if (c.events > 0.0) {
    emit(c, sl::format_counts(sl::sample_counts(sweep, c.events, c.seed),
                              sl::config_header(m) + "# events_per_point=" + num(c.events) +
                                  " seed=" + std::to_string(c.seed) + '\n'));
  } else {
    emit(c, sl::format_sweep(m, sweep));
  }
  return 0;
}

int cmd_certify(const RunConfig& c) {
  std::vector<double> phases = alice_phases(c);
  std::ostringstream os;
  os << "r_a=" << num(c.r_a) << "\nvisibility=" << num(c.visibility) << '\n';
  if (c.optimize) {
    sl::PhaseOptimizerOptions po;
    po.visibility = c.visibility;
    po.threads = sl::resolve_threads(c.threads);
    const sl::PhaseOptimization opt = sl::optimize_phases(c.r_a, c.m, c.restarts, c.seed, po);
    phases = opt.best_phases;
    os << "optimized_eta_star=" << num(opt.eta_star) << '\n';
  }
  os << "phases=" << join(phases) << '\n';
  const sl::LhsProblem problem = sl::LhsProblem::for_lossy_state(c.r_a, phases, c.visibility);

  if (!c.eta_given) {
    const auto start = std::chrono::steady_clock::now();
    const sl::CriticalEfficiency ce = sl::critical_eta(c.r_a, phases, c.precision, {}, true, c.visibility);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    os << "eta_star=" << num(ce.eta_star) << "\nbracket_lo=" << num(ce.feasible_eta)
       << "\nbracket_hi=" << num(ce.infeasible_eta) << "\nbracket_width=" << num(ce.bracket_width)
       << "\nprecision=" << num(c.precision) << "\nfeasible_residual=" << num(ce.feasible_residual)
       << "\ninfeasible_margin=" << num(ce.infeasible_margin) << "\nsolves=" << ce.solves
       << "\nalways_unsteerable=" << (ce.always_unsteerable ? "true" : "false") << '\n';
    char line[64];
    std::snprintf(line, sizeof line, "%.3f", secs);
    os << "seconds=" << line << '\n';
    std::cout << os.str();
    return 0;
  }

  const sl::Assemblage a = problem.at(c.eta);
  const sl::LhsResult r = sl::lhs_feasible(a);
  os << "eta=" << num(c.eta) << '\n';
  switch (r.status) {
    case sl::LhsStatus::feasible:
      os << "status=feasible (unsteerable)\ncertificate_residual=" << num(sl::certificate_residual(*r.certificate, a))
         << "\ncertificate_min_eigenvalue=" << num(sl::certificate_min_eigenvalue(*r.certificate)) << '\n';
      break;
    case sl::LhsStatus::infeasible:
      os << "status=infeasible (steerable)\n";
      if (r.witness) os << "witness_margin=" << num(r.witness->margin()) << '\n';
      os << "best_residual=" << num(r.residual) << '\n';
      break;
    case sl::LhsStatus::indeterminate:
      std::cout << os.str();
      throw sl::IndeterminateError("feasibility undecided at eta=" + num(c.eta) + " (best residual " +
                                   num(r.residual) + ")");
  }
  os << "iterations=" << r.iterations << '\n';
  std::cout << os.str();
  return 0;
}

int cmd_optimize(const RunConfig& c) {
  sl::PhaseOptimizerOptions po;
  po.visibility = c.visibility;
  po.threads = sl::resolve_threads(c.threads);
  const sl::PhaseOptimization opt = sl::optimize_phases(c.r_a, c.m, c.restarts, c.seed, po);
  std::vector<double> quadrature(c.m);
  for (int x = 0; x < c.m; ++x) quadrature[x] = sl::kTwoPi * x / c.m;
  std::ostringstream os;
  os << "r_a=" << num(c.r_a) << "\nm=" << c.m << "\nrestarts=" << c.restarts << "\nseed=" << c.seed << '\n'
     << "best_eta_star=" << num(opt.eta_star) << "\nbest_phases=" << join(sl::canonical_phases(opt.best_phases))
     << '\n';
  int near = 0;
  for (std::size_t k = 0; k < opt.runs.size(); ++k) {
    const auto& r = opt.runs[k];
    const double d = sl::phase_set_distance(r.phases, quadrature);
    near += d <= 0.05 ? 1 : 0;
    os << "run." << k + 1 << " start=" << join(r.start) << " start_eta=" << num(r.start_eta)
       << " eta_star=" << num(r.eta_star) << " phases=" << join(sl::canonical_phases(r.phases))
       << " distance_to_uniform=" << num(d) << " evaluations=" << r.evaluations
       << " undecided=" << r.failed_evaluations << " converged=" << (r.converged ? "true" : "false") << '\n';
    os << "run." << k + 1 << ".trajectory=" << join(r.history) << '\n';
  }
  os << "near_uniform=" << near << '/' << opt.runs.size() << '\n';
  emit(c, os.str());
  return 0;
}

int cmd_analyze(const RunConfig& c) {
  if (c.input.empty()) throw sl::ValidationError("analyze needs --input <counts file>");
  const sl::CountsRecord rec = sl::load_counts(c.input);
  const sl::InequalityFamily f = family(c);
  const sl::AnalysisReport rep = sl::analyze_counts(rec, f, sl::parse_extraction_mode(c.mode));
  std::ostringstream os;
  os << "input=" << c.input << "\nrows=" << rec.rows.size() << "\nmode=" << sl::to_string(rep.mode) << '\n';
  const char* names[4] = {"pp", "pm", "mp", "mm"};
  for (int k = 0; k < 4; ++k) {
    const auto& o = rep.fit.outcome[k];
    os << "fit." << names[k] << "=A:" << num(o.offset) << " B:" << num(o.amplitude) << " phi0:" << num(o.phase) << '\n';
  }
  os << "fit.rss=" << num(rep.fit.rss) << "\nfit.clamped=" << (rep.fit.clamped ? "true" : "false") << '\n';
  for (int x = 0; x < rep.table.alice_settings(); ++x) {
    for (int y = 0; y < rep.table.bob_settings(); ++y) {
      os << "p." << x + 1 << '.' << y + 1 << '=';
      for (int k = 0; k < 4; ++k) os << (k ? " " : "") << num(rep.table.cell(x, y)[k]);
      os << '\n';
    }
  }
  os << "signalling=" << num(rep.table.signalling()) << "\nS=" << num(rep.value.s)
     << "\ns_max=" << num(rep.inequality.s_max) << "\ndelta_s=" << num(rep.value.delta_s) << '\n';
  emit(c, os.str());
  return 0;
}

int cmd_montecarlo(const RunConfig& c) {
  const sl::InequalityFamily f = family(c);
  sl::MonteCarloConfig mc;
  mc.runs = c.runs;
  mc.seed = c.seed;
  mc.r_b_mean = c.r_b;
  mc.r_b_sigma = c.r_b_sigma;
  mc.resample_r_a = c.resample_r_a;
  mc.r_a_sigma = c.r_a_sigma;
  mc.threads = sl::resolve_threads(c.threads);

  sl::MonteCarloResult r;
  std::string source;
  if (!c.input.empty()) {
    if (c.resample_r_a) throw sl::ValidationError("--resample-r-a applies only to model-generated counts");
    const sl::CountsRecord rec = sl::load_counts(c.input);
    const sl::ExtractionMode mode = sl::parse_extraction_mode(c.mode);
    if (mode == sl::ExtractionMode::nearest_point) {
      r = sl::monte_carlo(rec, f, mc);
    } else {
      double events = 0.0;
      for (const auto& row : rec.rows) events += static_cast<double>(row.total());
      events /= static_cast<double>(rec.rows.size());
      const sl::CosineFit fit = sl::fit_cosine(sl::probabilities_from_counts(rec));
      r = sl::monte_carlo(sl::setting_counts_from_table(
                              sl::extract_setting_table(fit, f.alice_phases, sl::bob_phase_list(f)), events),
                          f, mc);
    }
    source = "source=" + c.input + "\nmode=" + sl::to_string(mode) + '\n';
  } else {
    const double events = c.events > 0.0 ? c.events : 1e6;
    r = sl::monte_carlo(model(c), events, f, mc);
    source = "source=model\nevents_per_setting=" + num(events) + '\n';
  }
  const std::string text = sl::format_monte_carlo(r);
  if (!c.output.empty()) {
    std::ofstream out(c.output);
    if (!out) throw sl::ValidationError("cannot write '" + c.output + "'");
    out << text;
  }
  std::cout << source << "r_b_sigma=" << num(c.r_b_sigma) << '\n' << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Displacement-based steering: inequalities, bounds, simulation, certification and data analysis"};
  app.set_config("--config", "", "key=value file with option defaults (command-line flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig c;
  app.add_option("--s", c.s, "Steering matrix parameter s")->capture_default_str();
  app.add_option("--t", c.t, "Steering matrix parameter t (> 0)")->capture_default_str();
  app.add_option("--m", c.m, "Number of Alice settings")->capture_default_str();
  app.add_option("--r-a", c.r_a, "Alice displacement amplitude")->capture_default_str();
  app.add_option("--r-b", c.r_b, "Bob displacement amplitude")->capture_default_str();
  auto* eta_opt = app.add_option("--eta", c.eta, "Overall efficiency")->capture_default_str();
  app.add_option("--visibility", c.visibility, "Interference visibility")->capture_default_str();
  app.add_option("--phases", c.phases, "Alice phases in radians, comma separated");
  app.add_option("--n-max-tol", c.n_max_tol, "Convergence tolerance of the full-space bound")->capture_default_str();
  app.add_option("--n-max", c.n_max, "Fock cutoff of the oracle simulation")->capture_default_str();
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
  app.add_option("--runs", c.runs, "Monte Carlo runs")->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads (default: STEERING_LAB_THREADS or all cores)");
  app.add_option("--points", c.points, "Sweep points")->capture_default_str();
  app.add_option("--events", c.events, "Events per sweep point or setting (sweep: 0 writes probabilities)");
  app.add_flag("--oracle", c.oracle, "Cross-check against the truncated-Fock simulation");
  app.add_flag("--reference", c.reference, "Compare coefficients with the published reference values");
  app.add_option("--precision", c.precision, "Bisection precision in eta")->capture_default_str();
  app.add_flag("--optimize", c.optimize, "Optimize Alice phases before certifying");
  app.add_option("--restarts", c.restarts, "Optimizer restarts")->capture_default_str();
  app.add_option("--input,-i", c.input, "Counts file");
  app.add_option("--output,-o", c.output, "Output file");
  app.add_option("--mode", c.mode, "Extraction mode: from_fit or nearest_point")->capture_default_str();
  app.add_option("--r-b-sigma", c.r_b_sigma, "Standard deviation of r_B in the Monte Carlo")->capture_default_str();
  app.add_flag("--resample-r-a", c.resample_r_a, "Also resample r_A (model-generated counts only)");
  app.add_option("--r-a-sigma", c.r_a_sigma, "Standard deviation of r_A when resampled")->capture_default_str();

  auto* bound = app.add_subcommand("bound", "Unsteerable bounds and inequality coefficients");
  auto* simulate = app.add_subcommand("simulate", "Joint probability table of the model");
  auto* sweep = app.add_subcommand("sweep", "Phase sweep (probabilities or sampled counts)");
  auto* certify = app.add_subcommand("certify", "Critical efficiency or LHS feasibility at one eta");
  auto* optimize = app.add_subcommand("optimize", "Nelder-Mead search over Alice phases");
  auto* analyze = app.add_subcommand("analyze", "S - S_max from a counts file");
  auto* montecarlo = app.add_subcommand("montecarlo", "Monte Carlo spread of S - S_max");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << '\n';
    return 2;
  }
  c.eta_given = eta_opt->count() > 0;

  try {
    if (c.threads < 0) throw sl::ValidationError("--threads must be >= 0");
    if (*bound) return cmd_bound(c);
    if (*simulate) return cmd_simulate(c);
    if (*sweep) return cmd_sweep(c);
    if (*certify) return cmd_certify(c);
    if (*optimize) return cmd_optimize(c);
    if (*analyze) return cmd_analyze(c);
    if (*montecarlo) return cmd_montecarlo(c);
  } catch (const sl::Error& e) {
    std::cerr << "error[" << e.kind() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
