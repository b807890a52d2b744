#ifndef STEERING_LAB_QUANTUM_MODEL_HPP
#define STEERING_LAB_QUANTUM_MODEL_HPP

// Model of the experiment: the lossy single-photon path-entangled state,
// displacement POVMs on both sides, Bob's assemblage and the joint click
// statistics. oracle_probabilities re-derives the statistics by brute force
// in truncated two-mode Fock space.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "steering_lab/errors.hpp"
#include "steering_lab/fock_ops.hpp"
#include "steering_lab/inequality.hpp"
#include "steering_lab/probability_table.hpp"

namespace steering_lab {

struct ModelConfig {
  double eta = 0.52;
  double r_a = 0.233;
  double r_b = 0.217;
  std::vector<double> alice_phases = matched_alice_phases(4);
  std::vector<double> bob_phases{kQuadraturePhases.begin(), kQuadraturePhases.end()};
  double visibility = 1.0;

  int alice_settings() const noexcept { return static_cast<int>(alice_phases.size()); }
  int bob_settings() const noexcept { return static_cast<int>(bob_phases.size()); }

  void validate() const {
    if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("eta must be in [0, 1]");
    if (!(visibility >= 0.0 && visibility <= 1.0)) throw ValidationError("visibility must be in [0, 1]");
    if (!(r_a >= 0.0) || !std::isfinite(r_a)) throw ValidationError("r_A must be >= 0");
    if (!(r_b >= 0.0) || !std::isfinite(r_b)) throw ValidationError("r_B must be >= 0");
    if (alice_phases.empty()) throw ValidationError("need at least one Alice setting");
    if (bob_phases.empty()) throw ValidationError("need at least one Bob setting");
  }
};

using TwoModeMatrix = Eigen::Matrix4cd;

/// Density matrix on {|00⟩, |01⟩, |10⟩, |11⟩}, first label Alice's mode.
struct TwoModeState {
  TwoModeMatrix rho;

  void validate(double tol = 1e-12) const {
    if (!is_hermitian(rho, tol)) throw ValidationError("state is not Hermitian");
    if (std::abs(rho.trace().real() - 1.0) > tol) throw ValidationError("state trace differs from 1");
    Eigen::SelfAdjointEigenSolver<TwoModeMatrix> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) throw ValidationError("state is not positive semidefinite");
  }
};

/// η·|Ψ⟩⟨Ψ| + (1−η)·|00⟩⟨00| with Ψ = (|01⟩+|10⟩)/√2 and its |01⟩⟨10|
/// coherences scaled by the visibility.
inline TwoModeState make_state(double eta, double visibility = 1.0) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("eta must be in [0, 1]");
  if (!(visibility >= 0.0 && visibility <= 1.0)) throw ValidationError("visibility must be in [0, 1]");
  TwoModeState s;
  s.rho.setZero();
  s.rho(0, 0) = 1.0 - eta;
  s.rho(1, 1) = 0.5 * eta;
  s.rho(2, 2) = 0.5 * eta;
  s.rho(1, 2) = 0.5 * eta * visibility;
  s.rho(2, 1) = 0.5 * eta * visibility;
  return s;
}

struct BinaryPovm {
  QubitOperator plus;   // no click
  QubitOperator minus;  // click
};

/// Π_+ = Π'(r, θ) (no click), Π_− = 𝟙 − Π_+.
inline BinaryPovm side_povm(const DisplacementSetting& setting) {
  BinaryPovm p;
  p.plus = projector_qubit(setting);
  p.minus = QubitOperator::Identity() - p.plus;
  return p;
}

/// Bob's conditional states σ_{a|x} and reduced state σ_R.
struct Assemblage {
  std::vector<QubitOperator> plus;
  std::vector<QubitOperator> minus;
  QubitOperator sigma_r = QubitOperator::Zero();

  int settings() const noexcept { return static_cast<int>(plus.size()); }
  const QubitOperator& sigma(int a, int x) const { return a > 0 ? plus.at(x) : minus.at(x); }

  /// Largest deviation of Σ_a σ_{a|x} from σ_R over x.
  double signalling() const {
    double worst = 0.0;
    for (int x = 0; x < settings(); ++x) worst = std::max(worst, (plus[x] + minus[x] - sigma_r).cwiseAbs().maxCoeff());
    return worst;
  }
};

/// Tr_A[(Π ⊗ 𝟙) ρ] for a 2x2 operator Π on Alice's qubit.
inline QubitOperator partial_trace_alice(const TwoModeState& state, const QubitOperator& alice_op) {
  QubitOperator out = QubitOperator::Zero();
  for (int j = 0; j < 2; ++j) {
    for (int jp = 0; jp < 2; ++jp) {
      cplx acc = 0.0;
      for (int i = 0; i < 2; ++i) {
        for (int ip = 0; ip < 2; ++ip) acc += alice_op(ip, i) * state.rho(2 * i + j, 2 * ip + jp);
      }
      out(j, jp) = acc;
    }
  }
  return out;
}

inline Assemblage compute_assemblage(const TwoModeState& state, double r_a, const std::vector<double>& alice_phases) {
  Assemblage out;
  out.plus.reserve(alice_phases.size());
  out.minus.reserve(alice_phases.size());
  for (double theta : alice_phases) {
    const BinaryPovm povm = side_povm(DisplacementSetting(r_a, theta));
    out.plus.push_back(hermitize(partial_trace_alice(state, povm.plus)));
    out.minus.push_back(hermitize(partial_trace_alice(state, povm.minus)));
  }
  out.sigma_r = hermitize(partial_trace_alice(state, QubitOperator::Identity()));
  return out;
}

/// p(ab|xy) = Tr[(Π_{a|x} ⊗ Π_{b|y}) ρ].
inline ProbabilityTable joint_probabilities(const ModelConfig& config) {
  config.validate();
  const TwoModeState state = make_state(config.eta, config.visibility);
  ProbabilityTable table(config.alice_settings(), config.bob_settings());
  std::vector<BinaryPovm> bob;
  for (double th : config.bob_phases) bob.push_back(side_povm(DisplacementSetting(config.r_b, th)));
  for (int x = 0; x < config.alice_settings(); ++x) {
    const BinaryPovm alice = side_povm(DisplacementSetting(config.r_a, config.alice_phases[x]));
    for (int y = 0; y < config.bob_settings(); ++y) {
      for (int a : {+1, -1}) {
        const QubitOperator& pa = a > 0 ? alice.plus : alice.minus;
        const QubitOperator sigma = partial_trace_alice(state, pa);
        for (int b : {+1, -1}) {
          const QubitOperator& pb = b > 0 ? bob[y].plus : bob[y].minus;
          table.at(a, b, x, y) = (pb * sigma).trace().real();
        }
      }
    }
  }
  return table;
}

struct SweepPoint {
  double phase = 0.0;
  OutcomeDistribution p{};
};

/// Joint probabilities with Bob fixed at bob_phases[0] and Alice's phase set to
/// each listed value (the relative phase when Bob's phase is 0).
inline std::vector<SweepPoint> phase_sweep(const ModelConfig& config, const std::vector<double>& phases) {
  if (phases.empty()) throw ValidationError("phase sweep needs at least one phase");
  ModelConfig c = config;
  c.alice_phases = phases;
  c.bob_phases = {config.bob_phases.at(0)};
  const ProbabilityTable t = joint_probabilities(c);
  std::vector<SweepPoint> out(phases.size());
  for (std::size_t i = 0; i < phases.size(); ++i) out[i] = {phases[i], t.cell(static_cast<int>(i), 0)};
  return out;
}

inline std::vector<double> uniform_phases(int points) {
  if (points < 1) throw ValidationError("need at least one sweep point");
  std::vector<double> out(points);
  for (int i = 0; i < points; ++i) out[i] = kTwoPi * i / points;
  return out;
}

inline void require_consistent(const ModelConfig& config, const InequalityFamily& family) {
  if (config.alice_settings() != family.m) throw ValidationError("model and family disagree on m");
  if (config.bob_settings() != 4) throw ValidationError("the inequality needs four Bob settings");
  for (int y = 0; y < 4; ++y) {
    if (std::abs(reduce_phase(config.bob_phases[y]) - reduce_phase(family.bob_phases[y])) > 1e-12) {
      throw ValidationError("model and family disagree on Bob phases");
    }
  }
  if (std::abs(config.r_b - family.r_b) > 1e-12) throw ValidationError("model and family disagree on r_B");
}

inline double theoretical_delta_s(const ModelConfig& config, const ProbabilityInequality& ineq) {
  return evaluate_steering(ineq, joint_probabilities(config)).delta_s;
}

inline double theoretical_delta_s(const ModelConfig& config, const InequalityFamily& family) {
  require_consistent(config, family);
  return theoretical_delta_s(config, build_inequality(family));
}

namespace detail {

/// exp(−α a† + α* a) on photon numbers 0..n_max, i.e. D(−α) in the truncated space.
inline FockOperator truncated_displacement(cplx alpha, int n_max) {
  const int dim = n_max + 1;
  FockOperator a = FockOperator::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  const FockOperator generator = -alpha * a.adjoint() + std::conj(alpha) * a;
  return generator.exp();
}

inline double binomial(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

}  // namespace detail

/// Brute-force click statistics. A photon enters a 50/50 beamsplitter (unitary
/// exp(θ(a†b − ab†)) with θ = −π/4), the coherence is damped by the visibility,
/// each mode passes a loss channel of transmission η, and each side is measured
/// with the no-click projector |0⟩⟨0| after the displacement D(−α).
inline ProbabilityTable oracle_probabilities(const ModelConfig& config, int n_max) {
  config.validate();
  if (n_max < 6) throw CutoffError("oracle needs n_max >= 6");
  for (double r : {config.r_a, config.r_b}) {
    if (coherent_tail(r, n_max) > 1e-8) throw CutoffError("cutoff too small for the displacement amplitudes");
  }
  const int d = n_max + 1;
  const int dim = d * d;
  auto idx = [d](int na, int nb) { return na * d + nb; };

  // Two-mode ladder operators.
  FockOperator a1 = FockOperator::Zero(d, d);
  for (int n = 1; n < d; ++n) a1(n - 1, n) = std::sqrt(static_cast<double>(n));
  const FockOperator id = FockOperator::Identity(d, d);
  const FockOperator a = Eigen::kroneckerProduct(a1, id).eval();
  const FockOperator b = Eigen::kroneckerProduct(id, a1).eval();
  const FockOperator bs = (-0.25 * kPi * (a.adjoint() * b - a * b.adjoint())).exp();

  Eigen::VectorXcd input = Eigen::VectorXcd::Zero(dim);
  input[idx(1, 0)] = 1.0;
  const Eigen::VectorXcd split = bs * input;
  FockOperator rho = split * split.adjoint();

  // Partial distinguishability removes the Fock-basis coherences.
  const FockOperator dephased = rho.diagonal().asDiagonal();
  rho = config.visibility * rho + (1.0 - config.visibility) * dephased;

  // Pure-loss channel per mode: K_k = Σ_n sqrt(C(n,k) η^{n−k} (1−η)^k) |n−k⟩⟨n|.
  std::vector<FockOperator> kraus;
  for (int k = 0; k < d; ++k) {
    FockOperator kk = FockOperator::Zero(d, d);
    for (int n = k; n < d; ++n) {
      kk(n - k, n) = std::sqrt(detail::binomial(n, k) * std::pow(config.eta, n - k) * std::pow(1.0 - config.eta, k));
    }
    kraus.push_back(kk);
  }
  auto apply_loss = [&](const FockOperator& in, bool on_alice) {
    FockOperator out = FockOperator::Zero(dim, dim);
    for (const auto& k : kraus) {
      const FockOperator big = on_alice ? Eigen::kroneckerProduct(k, id).eval() : Eigen::kroneckerProduct(id, k).eval();
      out += big * in * big.adjoint();
    }
    return out;
  };
  rho = apply_loss(apply_loss(rho, true), false);

  // No-click vectors D(−α)†|0⟩ per setting.
  auto no_click_vector = [&](double r, double theta) {
    const FockOperator u = detail::truncated_displacement(std::polar(r, theta), n_max);
    Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(d);
    vac[0] = 1.0;
    return Eigen::VectorXcd(u.adjoint() * vac);
  };

  ProbabilityTable table(config.alice_settings(), config.bob_settings());
  std::vector<Eigen::VectorXcd> bob_vec;
  for (double th : config.bob_phases) bob_vec.push_back(no_click_vector(config.r_b, th));
  for (int x = 0; x < config.alice_settings(); ++x) {
    const Eigen::VectorXcd av = no_click_vector(config.r_a, config.alice_phases[x]);
    const FockOperator pa = Eigen::kroneckerProduct(FockOperator(av * av.adjoint()), id).eval();
    const double p_alice_nc = (pa * rho).trace().real();
    for (int y = 0; y < config.bob_settings(); ++y) {
      const Eigen::VectorXcd& bv = bob_vec[y];
      const FockOperator pb = Eigen::kroneckerProduct(id, FockOperator(bv * bv.adjoint())).eval();
      const double p_bob_nc = (pb * rho).trace().real();
      const Eigen::VectorXcd joint = Eigen::kroneckerProduct(av, bv).eval();
      const double p_pp = (joint.adjoint() * rho * joint)(0, 0).real();
      auto& cell = table.cell(x, y);
      cell[outcome_index(+1, +1)] = p_pp;
      cell[outcome_index(+1, -1)] = p_alice_nc - p_pp;
      cell[outcome_index(-1, +1)] = p_bob_nc - p_pp;
      cell[outcome_index(-1, -1)] = rho.trace().real() - p_alice_nc - p_bob_nc + p_pp;
    }
  }
  return table;
}

namespace detail {
inline std::string format12(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}
}  // namespace detail

inline std::string config_header(const ModelConfig& c) {
  std::ostringstream os;
  os << "# eta=" << detail::format12(c.eta) << " r_a=" << detail::format12(c.r_a) << " r_b=" << detail::format12(c.r_b)
     << " visibility=" << detail::format12(c.visibility) << " alice_phases=";
  for (std::size_t i = 0; i < c.alice_phases.size(); ++i) os << (i ? "," : "") << detail::format12(c.alice_phases[i]);
  os << " bob_phases=";
  for (std::size_t i = 0; i < c.bob_phases.size(); ++i) os << (i ? "," : "") << detail::format12(c.bob_phases[i]);
  os << '\n';
  return os.str();
}

/// Header line, then "x y p_pp p_pm p_mp p_mm" rows (1-based settings).
inline std::string format_table(const ModelConfig& c, const ProbabilityTable& t) {
  std::ostringstream os;
  os << config_header(c) << "# x y p_pp p_pm p_mp p_mm\n";
  for (int x = 0; x < t.alice_settings(); ++x) {
    for (int y = 0; y < t.bob_settings(); ++y) {
      const auto& cell = t.cell(x, y);
      os << x + 1 << ' ' << y + 1;
      for (double v : cell) os << ' ' << detail::format12(v);
      os << '\n';
    }
  }
  return os.str();
}

/// Header line, then "phase p_pp p_pm p_mp p_mm" rows.
inline std::string format_sweep(const ModelConfig& c, const std::vector<SweepPoint>& sweep) {
  std::ostringstream os;
  os << config_header(c) << "# phase p_pp p_pm p_mp p_mm\n";
  for (const auto& pt : sweep) {
    os << detail::format12(pt.phase);
    for (double v : pt.p) os << ' ' << detail::format12(v);
    os << '\n';
  }
  return os.str();
}

}  // namespace steering_lab

#endif  // STEERING_LAB_QUANTUM_MODEL_HPP
