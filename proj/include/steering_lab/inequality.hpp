#ifndef STEERING_LAB_INEQUALITY_HPP
#define STEERING_LAB_INEQUALITY_HPP

// Steering-inequality family for displacement measurements: qubit steering
// matrices, their resolution on Bob's displaced projectors, the full-space
// extension, unsteerable bounds, and the probability form of the inequality.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "steering_lab/errors.hpp"
#include "steering_lab/fock_ops.hpp"
#include "steering_lab/probability_table.hpp"
#include "steering_lab/strategies.hpp"

namespace steering_lab {

/// Alice phases that align with the family's steering matrices, θ_x = −2π(x−1)/m.
/// For m = 4 this is (0, 3π/2, π, π/2).
inline std::vector<double> matched_alice_phases(int m) {
  std::vector<double> out(static_cast<std::size_t>(std::max(m, 0)));
  for (int x = 0; x < m; ++x) out[x] = reduce_phase(-kTwoPi * x / m);
  return out;
}

struct InequalityFamily {
  double s = 0.983;
  double t = 0.0656;
  int m = 4;
  std::vector<double> alice_phases = matched_alice_phases(4);
  double r_b = 0.217;
  std::array<double, 4> bob_phases = kQuadraturePhases;

  static InequalityFamily make(double s, double t, int m, double r_b) {
    InequalityFamily f;
    f.s = s;
    f.t = t;
    f.m = m;
    f.r_b = r_b;
    f.alice_phases = matched_alice_phases(m);
    f.validate();
    return f;
  }

  void validate() const {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("s must be > 0");
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("t must be > 0");
    if (m < 4 || m > kMaxSettings) throw ValidationError("m must be in [4, 16]");
    if (static_cast<int>(alice_phases.size()) != m) throw ValidationError("alice_phases must have m entries");
    if (!(r_b >= 0.0) || !std::isfinite(r_b)) throw ValidationError("r_B must be >= 0");
  }
};

struct FamilyMatrices {
  QubitOperator g_r;
  std::vector<QubitOperator> g_x;
};

/// G'_R = diag(s, 0); G'_x = [[0, t·e^{iφ_x}], [t·e^{−iφ_x}, 1/m]] with φ_x = 2π(x−1)/m.
inline FamilyMatrices family_matrices(const InequalityFamily& family) {
  family.validate();
  FamilyMatrices out;
  out.g_r = QubitOperator::Zero();
  out.g_r(0, 0) = family.s;
  out.g_x.reserve(family.m);
  for (int x = 0; x < family.m; ++x) {
    const double phi = kTwoPi * x / family.m;
    QubitOperator g;
    g(0, 0) = 0.0;
    g(0, 1) = std::polar(family.t, phi);
    g(1, 0) = std::polar(family.t, -phi);
    g(1, 1) = 1.0 / family.m;
    out.g_x.push_back(g);
  }
  return out;
}

/// S'_max: largest eigenvalue of G'_R + Σ_x l_x G'_x over all 2^m strategies.
inline double qubit_bound(const InequalityFamily& family) {
  const FamilyMatrices g = family_matrices(family);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& l : deterministic_strategies(family.m)) {
    QubitOperator sum = g.g_r;
    for (int x = 0; x < family.m; ++x) {
      if (l.bit(x)) sum += g.g_x[x];
    }
    best = std::max(best, max_eigenvalue_2x2(sum));
  }
  return best;
}

/// Coefficients of G'_ν = Σ_y c_{νy} Π'(r_B, θ_y) + c_{ν0} 𝟙.
struct CoefficientSet {
  double c_r0 = 0.0;
  std::array<double, 4> c_ry{};
  std::vector<double> c_x0;
  std::vector<std::array<double, 4>> c_xy;
};

/// max entrywise |Σ_y c_{νy}Π'(r_B,θ_y) + c_{ν0}𝟙 − G'_ν| over ν ∈ {R, 1..m}.
inline double decomposition_residual(const CoefficientSet& c, const InequalityFamily& family) {
  const FamilyMatrices g = family_matrices(family);
  std::array<QubitOperator, 4> proj;
  for (int y = 0; y < 4; ++y) proj[y] = projector_qubit(DisplacementSetting(family.r_b, family.bob_phases[y]));
  auto rebuild = [&](const std::array<double, 4>& cy, double c0) {
    QubitOperator out = c0 * QubitOperator::Identity();
    for (int y = 0; y < 4; ++y) out += cy[y] * proj[y];
    return out;
  };
  double worst = (rebuild(c.c_ry, c.c_r0) - g.g_r).cwiseAbs().maxCoeff();
  for (int x = 0; x < family.m; ++x) {
    worst = std::max(worst, (rebuild(c.c_xy[x], c.c_x0[x]) - g.g_x[x]).cwiseAbs().maxCoeff());
  }
  return worst;
}

inline void require_quadrature_bob_phases(const InequalityFamily& family) {
  for (int y = 0; y < 4; ++y) {
    if (std::abs(reduce_phase(family.bob_phases[y]) - kQuadraturePhases[y]) > 1e-12) {
      throw ValidationError("decomposition is defined for Bob phases {0, π/2, π, 3π/2} only");
    }
  }
}

/// Closed-form resolution of the steering matrices on Bob's four displaced
/// projectors (at m = 4 these are c_R0 = −r²s/(1−r²), c_R1 = c_R3 = e^{r²}s/(2(1−r²)), ...).
inline CoefficientSet decompose_g(const InequalityFamily& family) {
  family.validate();
  require_quadrature_bob_phases(family);
  const double r = family.r_b;
  if (!(r > 0.0) || !(r < 1.0)) {
    throw SingularResolutionError("decomposition needs 0 < r_B < 1");
  }
  const double r2 = r * r;
  const double er2 = std::exp(r2);
  const double k = er2 / (2.0 * r);
  const int m = family.m;

  CoefficientSet c;
  c.c_r0 = -r2 * family.s / (1.0 - r2);
  const double cr = er2 * family.s / (2.0 * (1.0 - r2));
  c.c_ry = {cr, 0.0, cr, 0.0};

  c.c_x0.assign(m, 1.0 / (m * (1.0 - r2)));
  c.c_xy.resize(m);
  const double diag_part = -er2 / (2.0 * m * (1.0 - r2));
  for (int x = 0; x < m; ++x) {
    const double phi = kTwoPi * x / m;
    // Zero the rounding residue of cos/sin at multiples of π/2.
    double cs = std::cos(phi);
    double sn = std::sin(phi);
    if (std::abs(cs) < 1e-15) cs = 0.0;
    if (std::abs(sn) < 1e-15) sn = 0.0;
    c.c_xy[x] = {k * family.t * cs + diag_part, -k * family.t * sn, -k * family.t * cs + diag_part,
                 k * family.t * sn};
  }

  const double residual = decomposition_residual(c, family);
  if (residual >= 1e-12) {
    throw SingularResolutionError("decomposition identity violated (residual " + std::to_string(residual) + ")");
  }
  return c;
}

struct FullSpaceMatrices {
  FockOperator g_r;
  std::vector<FockOperator> g_x;
};

/// G_ν = Σ_y c_{νy} Π(r_B, θ_y) + c_{ν0} 𝟙 on photon numbers 0..n_max.
inline FullSpaceMatrices fullspace_g(const CoefficientSet& c, const InequalityFamily& family, int n_max) {
  require_cutoff(n_max, 2);
  const int dim = n_max + 1;
  std::array<FockOperator, 4> proj;
  for (int y = 0; y < 4; ++y) proj[y] = projector_full(DisplacementSetting(family.r_b, family.bob_phases[y]), n_max);
  auto build = [&](const std::array<double, 4>& cy, double c0) {
    FockOperator out = c0 * FockOperator::Identity(dim, dim);
    for (int y = 0; y < 4; ++y) out += cy[y] * proj[y];
    return hermitize(out);
  };
  FullSpaceMatrices out;
  out.g_r = build(c.c_ry, c.c_r0);
  out.g_x.reserve(family.m);
  for (int x = 0; x < family.m; ++x) out.g_x.push_back(build(c.c_xy[x], c.c_x0[x]));
  return out;
}

/// Unsteerable bound at a fixed cutoff.
inline double fullspace_bound_at(const CoefficientSet& c, const InequalityFamily& family, int n_max) {
  const FullSpaceMatrices g = fullspace_g(c, family, n_max);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& l : deterministic_strategies(family.m)) {
    FockOperator sum = g.g_r;
    for (int x = 0; x < family.m; ++x) {
      if (l.bit(x)) sum += g.g_x[x];
    }
    best = std::max(best, max_eigenvalue(sum));
  }
  return best;
}

struct FullSpaceBound {
  double s_max = 0.0;
  int n_max_used = 0;
  /// Bound at n_max = 2, 3, ... up to n_max_used.
  std::vector<double> trajectory;
};

inline constexpr int kMaxFockCutoff = 24;

/// Raise the cutoff from 2 until the bound agrees with both of the two previous
/// cutoffs to within tol. The bound tends to move only at every other cutoff, so a
/// single neighbour comparison can stop on a plateau.
inline FullSpaceBound fullspace_bound(const CoefficientSet& c, const InequalityFamily& family,
                                      double convergence_tol = 1e-9) {
  if (!(convergence_tol > 0.0)) throw ValidationError("convergence tolerance must be > 0");
  FullSpaceBound out;
  for (int n = 2; n <= kMaxFockCutoff; ++n) {
    const double current = fullspace_bound_at(c, family, n);
    out.trajectory.push_back(current);
    const std::size_t k = out.trajectory.size();
    if (k >= 3 && std::abs(current - out.trajectory[k - 2]) < convergence_tol &&
        std::abs(current - out.trajectory[k - 3]) < convergence_tol) {
      out.s_max = current;
      out.n_max_used = n;
      return out;
    }
  }
  throw CutoffError("full-space bound did not converge by n_max = 24; r_B too large for truncation");
}

/// Steering inequality on observed probabilities:
/// S = Σ c^{ab}_{xy} p(ab|xy) + c0 ≤ S_max.
struct ProbabilityInequality {
  std::vector<std::array<double, 4>> c_pp;
  std::vector<std::array<double, 4>> c_pm;
  std::vector<std::array<double, 4>> c_mp;
  std::vector<std::array<double, 4>> c_mm;
  double c0 = 0.0;
  double s_max = 0.0;
  double s_max_qubit = 0.0;
  int n_max_used = 0;

  int settings() const noexcept { return static_cast<int>(c_pp.size()); }

  const std::vector<std::array<double, 4>>& table(int a, int b) const {
    switch (outcome_index(a, b)) {
      case 0: return c_pp;
      case 1: return c_pm;
      case 2: return c_mp;
      default: return c_mm;
    }
  }
};

inline ProbabilityInequality probability_coefficients(const CoefficientSet& c, const InequalityFamily& family,
                                                      double s_max, double s_max_qubit = 0.0,
                                                      int n_max_used = 0) {
  const int m = family.m;
  if (static_cast<int>(c.c_xy.size()) != m || static_cast<int>(c.c_x0.size()) != m) {
    throw ValidationError("coefficient set does not match the family's m");
  }
  ProbabilityInequality ineq;
  ineq.c_pp.resize(m);
  ineq.c_pm.resize(m);
  ineq.c_mp.resize(m);
  ineq.c_mm.assign(m, {0.0, 0.0, 0.0, 0.0});
  for (int x = 0; x < m; ++x) {
    for (int y = 0; y < 4; ++y) {
      ineq.c_pp[x][y] = c.c_xy[x][y] + 0.25 * c.c_ry[y] + 0.25 * c.c_x0[x];
      ineq.c_pm[x][y] = 0.25 * c.c_x0[x];
      ineq.c_mp[x][y] = 0.25 * c.c_ry[y];
    }
  }
  ineq.c0 = c.c_r0;
  ineq.s_max = s_max;
  ineq.s_max_qubit = s_max_qubit;
  ineq.n_max_used = n_max_used;
  return ineq;
}

/// Decompose, bound in both spaces, and assemble the probability form.
inline ProbabilityInequality build_inequality(const InequalityFamily& family, double convergence_tol = 1e-9) {
  const CoefficientSet c = decompose_g(family);
  const FullSpaceBound full = fullspace_bound(c, family, convergence_tol);
  return probability_coefficients(c, family, full.s_max, qubit_bound(family), full.n_max_used);
}

struct SteeringValue {
  double s = 0.0;
  double delta_s = 0.0;
};

/// Evaluate the probability form; delta_s > 0 certifies steering.
inline SteeringValue evaluate_steering(const ProbabilityInequality& ineq, const ProbabilityTable& probs) {
  if (probs.alice_settings() != ineq.settings() || probs.bob_settings() != 4) {
    throw ValidationError("probability table shape does not match the inequality");
  }
  probs.require_normalized(1e-9);
  double s = ineq.c0;
  for (int x = 0; x < ineq.settings(); ++x) {
    for (int y = 0; y < 4; ++y) {
      const auto& cell = probs.cell(x, y);
      s += ineq.c_pp[x][y] * cell[0] + ineq.c_pm[x][y] * cell[1] + ineq.c_mp[x][y] * cell[2] +
           ineq.c_mm[x][y] * cell[3];
    }
  }
  return {s, s - ineq.s_max};
}

namespace detail {
/// Shortest text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v + 0.0);
  return std::string(buf, res.ptr);
}
}  // namespace detail

/// Key-value export, one coefficient per line, keys sorted lexicographically.
/// Settings are 1-based in the keys ("c_pp.1.1").
inline std::string export_inequality(const ProbabilityInequality& ineq, const InequalityFamily& family) {
  std::map<std::string, std::string> kv;
  const std::array<std::pair<const char*, int>, 4> names{{{"c_pp", 0}, {"c_pm", 1}, {"c_mp", 2}, {"c_mm", 3}}};
  for (const auto& [name, idx] : names) {
    const auto& tab = idx == 0 ? ineq.c_pp : idx == 1 ? ineq.c_pm : idx == 2 ? ineq.c_mp : ineq.c_mm;
    for (int x = 0; x < ineq.settings(); ++x) {
      for (int y = 0; y < 4; ++y) {
        kv[std::string(name) + "." + std::to_string(x + 1) + "." + std::to_string(y + 1)] =
            detail::format_number(tab[x][y]);
      }
    }
  }
  kv["c0"] = detail::format_number(ineq.c0);
  kv["m"] = std::to_string(family.m);
  kv["n_max_used"] = std::to_string(ineq.n_max_used);
  kv["r_b"] = detail::format_number(family.r_b);
  kv["s"] = detail::format_number(family.s);
  kv["s_max"] = detail::format_number(ineq.s_max);
  kv["s_max_qubit"] = detail::format_number(ineq.s_max_qubit);
  kv["t"] = detail::format_number(family.t);
  for (int x = 0; x < family.m; ++x) {
    kv["alice_phase." + std::to_string(x + 1)] = detail::format_number(family.alice_phases[x]);
  }
  for (int y = 0; y < 4; ++y) kv["bob_phase." + std::to_string(y + 1)] = detail::format_number(family.bob_phases[y]);
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  return os.str();
}

/// Coefficients quoted for the experimental inequality (s = 0.983, t = 0.0656,
/// r_B = 0.21), two significant digits.
struct ReferenceCoefficients {
  std::array<std::array<double, 4>, 4> c_pp{{{0.48, 0.46, 0.43, 0.45},
                                             {0.46, 0.43, 0.45, 0.48},
                                             {0.43, 0.45, 0.48, 0.46},
                                             {0.45, 0.48, 0.46, 0.43}}};
  double c_pm = 0.07;
  std::array<double, 4> c_mp{0.14, 0.0, 0.14, 0.0};
  double c0 = -0.06;
};

struct CoefficientComparison {
  std::string report;
  double max_abs_mismatch = 0.0;
  int mismatches = 0;  // entries differing by more than rounding (0.005)
};

/// Side-by-side comparison of computed and quoted coefficients at s=0.983,
/// t=0.0656, r_B=0.21, m=4. Reports, never throws on a mismatch.
inline CoefficientComparison compare_reference_coefficients() {
  const InequalityFamily family = InequalityFamily::make(0.983, 0.0656, 4, 0.21);
  const CoefficientSet c = decompose_g(family);
  const ProbabilityInequality ineq = probability_coefficients(c, family, 0.0);
  const ReferenceCoefficients ref;
  CoefficientComparison out;
  std::ostringstream os;
  char line[160];
  auto row = [&](const std::string& key, double computed, double quoted) {
    const double diff = computed - quoted;
    const bool bad = std::abs(diff) > 0.005;
    out.max_abs_mismatch = std::max(out.max_abs_mismatch, std::abs(diff));
    out.mismatches += bad ? 1 : 0;
    std::snprintf(line, sizeof line, "%-10s computed=% .6f quoted=% .2f diff=% .6f %s\n", key.c_str(), computed,
                  quoted, diff, bad ? "MISMATCH" : "ok");
    os << line;
  };
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      const std::string idx = "." + std::to_string(x + 1) + "." + std::to_string(y + 1);
      row("c_pp" + idx, ineq.c_pp[x][y], ref.c_pp[x][y]);
    }
  }
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      const std::string idx = "." + std::to_string(x + 1) + "." + std::to_string(y + 1);
      row("c_pm" + idx, ineq.c_pm[x][y], ref.c_pm);
      row("c_mp" + idx, ineq.c_mp[x][y], ref.c_mp[y]);
    }
  }
  row("c0", ineq.c0, ref.c0);
  os << "decomposition_residual=" << detail::format_number(decomposition_residual(c, family)) << '\n';
  os << "mismatches=" << out.mismatches << '\n';
  out.report = os.str();
  return out;
}

}  // namespace steering_lab

#endif  // STEERING_LAB_INEQUALITY_HPP
