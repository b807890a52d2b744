#ifndef STEERING_LAB_FOCK_OPS_HPP
#define STEERING_LAB_FOCK_OPS_HPP

// Operator algebra for displacement-based photon detection, on the 0-1 photon
// subspace (2x2) and on the photon-number-truncated Fock space.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "steering_lab/errors.hpp"

namespace steering_lab {

using cplx = std::complex<double>;
using QubitOperator = Eigen::Matrix2cd;
using FockOperator = Eigen::MatrixXcd;
using CoherentVector = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHermitianTol = 1e-12;

/// Reduce an angle to [0, 2π).
inline double reduce_phase(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  return t + 0.0;  // no negative zero
}

/// Shortest distance between two angles on the circle.
inline double circular_distance(double a, double b) {
  const double d = reduce_phase(a - b);
  return std::min(d, kTwoPi - d);
}

/// Displacement α = r·e^{iθ}; the phase is canonicalized at construction.
class DisplacementSetting {
 public:
  DisplacementSetting(double r, double theta) : r_(r), theta_(reduce_phase(theta)) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ValidationError("displacement amplitude must be finite and >= 0");
    }
    if (!std::isfinite(theta)) throw ValidationError("displacement phase must be finite");
  }

  double r() const noexcept { return r_; }
  double theta() const noexcept { return theta_; }
  cplx alpha() const { return std::polar(r_, theta_); }

  bool operator==(const DisplacementSetting&) const = default;

 private:
  double r_;
  double theta_;
};

/// n! for n = 0..n_max by cumulative product.
inline std::vector<double> factorial_table(int n_max) {
  std::vector<double> f(static_cast<std::size_t>(n_max) + 1, 1.0);
  for (int n = 1; n <= n_max; ++n) f[n] = f[n - 1] * n;
  return f;
}

inline void require_cutoff(int n_max, int minimum = 1) {
  if (n_max < minimum) {
    throw ValidationError("photon-number cutoff must be >= " + std::to_string(minimum));
  }
}

/// Fock components e^{-r²/2} rⁿ e^{inθ} / √(n!) for n = 0..n_max.
inline CoherentVector coherent_amplitudes(const DisplacementSetting& alpha, int n_max) {
  require_cutoff(n_max);
  const auto fact = factorial_table(n_max);
  CoherentVector v(n_max + 1);
  const double r = alpha.r();
  const double envelope = std::exp(-0.5 * r * r);
  for (int n = 0; n <= n_max; ++n) {
    v[n] = std::polar(envelope * std::pow(r, n) / std::sqrt(fact[n]), n * alpha.theta());
  }
  return v;
}

/// Probability weight of the coherent state beyond the cutoff,
/// Σ_{n>n_max} e^{-r²} r^{2n}/n!, summed directly from the tail.
inline double coherent_tail(double r, int n_max) {
  const double mean = r * r;
  if (mean == 0.0) return 0.0;
  double term = std::exp(-mean);
  for (int n = 1; n <= n_max; ++n) term *= mean / n;
  double sum = 0.0;
  for (int n = n_max + 1; n < n_max + 400; ++n) {
    term *= mean / n;
    sum += term;
    if (term < 1e-300 || term < sum * 1e-17) break;
  }
  return sum;
}

/// Symmetrize (A + A†)/2 after checking the pre-symmetrization asymmetry.
template <typename Derived>
auto hermitize(const Eigen::MatrixBase<Derived>& a, double tol = 1e-10) {
  using Plain = typename Derived::PlainObject;
  const Plain m = a;
  const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (asym > tol) {
    throw ValidationError("operator expected Hermitian; asymmetry " + std::to_string(asym));
  }
  return Plain((m + m.adjoint()) * 0.5);
}

template <typename Derived>
bool is_hermitian(const Eigen::MatrixBase<Derived>& a, double tol = kHermitianTol) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

/// |α⟩⟨α| truncated to photon numbers 0..n_max.
inline FockOperator projector_full(const DisplacementSetting& alpha, int n_max) {
  const CoherentVector v = coherent_amplitudes(alpha, n_max);
  return v * v.adjoint();
}

/// Compression of |α⟩⟨α| onto the 0-1 photon subspace.
inline QubitOperator projector_qubit(const DisplacementSetting& alpha) {
  const double r = alpha.r();
  const double e = std::exp(-r * r);
  QubitOperator p;
  p(0, 0) = e;
  p(0, 1) = std::polar(e * r, -alpha.theta());
  p(1, 0) = std::polar(e * r, alpha.theta());
  p(1, 1) = e * r * r;
  return p;
}

/// M = 2Π − 𝟙 on the qubit subspace.
inline QubitOperator observable_qubit(const DisplacementSetting& alpha) {
  return 2.0 * projector_qubit(alpha) - QubitOperator::Identity();
}

/// M = 2Π − 𝟙 on the truncated Fock space.
inline FockOperator observable_fock(const DisplacementSetting& alpha, int n_max) {
  return 2.0 * projector_full(alpha, n_max) - FockOperator::Identity(n_max + 1, n_max + 1);
}

inline QubitOperator pauli_x() { return (QubitOperator() << 0, 1, 1, 0).finished(); }
inline QubitOperator pauli_y() {
  return (QubitOperator() << 0, cplx(0, -1), cplx(0, 1), 0).finished();
}
inline QubitOperator pauli_z() { return (QubitOperator() << 1, 0, 0, -1).finished(); }

/// Largest eigenvalue of a 2x2 Hermitian matrix (closed-form quadratic root).
inline double max_eigenvalue_2x2(const QubitOperator& h) {
  const double a = h(0, 0).real();
  const double d = h(1, 1).real();
  const double half_diff = 0.5 * (a - d);
  return 0.5 * (a + d) + std::hypot(half_diff, std::abs(h(0, 1)));
}

inline double min_eigenvalue_2x2(const QubitOperator& h) {
  const double a = h(0, 0).real();
  const double d = h(1, 1).real();
  return 0.5 * (a + d) - std::hypot(0.5 * (a - d), std::abs(h(0, 1)));
}

/// Largest eigenvalue of a Hermitian matrix of any size.
inline double max_eigenvalue(const FockOperator& h) {
  Eigen::SelfAdjointEigenSolver<FockOperator> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

inline double min_eigenvalue(const FockOperator& h) {
  Eigen::SelfAdjointEigenSolver<FockOperator> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

/// The four displacement phases the Pauli resolution is written on.
inline constexpr std::array<double, 4> kQuadraturePhases{0.0, 0.5 * kPi, kPi, 1.5 * kPi};

/// Coefficients expressing σ_X, σ_Y, σ_Z on
/// {Π'(r,0), Π'(r,π/2), Π'(r,π), Π'(r,3π/2), 𝟙} (index 4 is the identity).
struct PauliResolution {
  double r = 0.0;
  std::array<double, 5> x{};
  std::array<double, 5> y{};
  std::array<double, 5> z{};

  /// Contract a coefficient row with the displaced projectors.
  QubitOperator contract(const std::array<double, 5>& c) const {
    QubitOperator out = c[4] * QubitOperator::Identity();
    for (std::size_t k = 0; k < 4; ++k) {
      out += c[k] * projector_qubit(DisplacementSetting(r, kQuadraturePhases[k]));
    }
    return out;
  }
};

inline PauliResolution pauli_resolution(double r) {
  if (!(r > 0.0)) throw SingularResolutionError("Pauli resolution needs r > 0 (division by r)");
  if (!(r < 1.0)) throw SingularResolutionError("Pauli resolution needs r < 1 (σ_Z denominator 1 - r²)");
  PauliResolution res;
  res.r = r;
  const double r2 = r * r;
  const double k = std::exp(r2) / (2.0 * r);
  res.x = {k, 0.0, -k, 0.0, 0.0};
  res.y = {0.0, k, 0.0, -k, 0.0};
  const double kz = std::exp(r2) / (1.0 - r2);
  res.z = {kz, 0.0, kz, 0.0, (r2 + 1.0) / (r2 - 1.0)};
  return res;
}

}  // namespace steering_lab

#endif  // STEERING_LAB_FOCK_OPS_HPP
