#ifndef STEERING_LAB_PROBABILITY_TABLE_HPP
#define STEERING_LAB_PROBABILITY_TABLE_HPP

#include <array>
#include <cmath>
#include <vector>

#include "steering_lab/errors.hpp"

namespace steering_lab {

/// Outcome pairs are stored in the order (++, +-, -+, --); a is Alice, b is Bob,
/// and +1 is the no-click outcome on both sides.
inline constexpr int outcome_index(int a, int b) noexcept { return (a > 0 ? 0 : 2) + (b > 0 ? 0 : 1); }

using OutcomeDistribution = std::array<double, 4>;

/// Joint click statistics p(a,b|x,y) for m Alice settings and n Bob settings.
class ProbabilityTable {
 public:
  ProbabilityTable() = default;
  ProbabilityTable(int alice_settings, int bob_settings)
      : m_(alice_settings), n_(bob_settings),
        p_(static_cast<std::size_t>(alice_settings) * bob_settings, OutcomeDistribution{}) {
    if (alice_settings < 1 || bob_settings < 1) throw ValidationError("table needs >= 1 setting per side");
  }

  int alice_settings() const noexcept { return m_; }
  int bob_settings() const noexcept { return n_; }

  OutcomeDistribution& cell(int x, int y) { return p_[index(x, y)]; }
  const OutcomeDistribution& cell(int x, int y) const { return p_[index(x, y)]; }

  double at(int a, int b, int x, int y) const { return cell(x, y)[outcome_index(a, b)]; }
  double& at(int a, int b, int x, int y) { return cell(x, y)[outcome_index(a, b)]; }

  /// Largest |Σ_ab p(ab|xy) − 1| over all setting pairs.
  double normalization_error() const {
    double worst = 0.0;
    for (const auto& c : p_) worst = std::max(worst, std::abs(c[0] + c[1] + c[2] + c[3] - 1.0));
    return worst;
  }

  void require_normalized(double tol = 1e-9) const {
    for (const auto& c : p_) {
      for (double v : c) {
        if (!(v >= -tol && v <= 1.0 + tol)) throw NormalizationError("probability outside [0,1]");
      }
    }
    if (normalization_error() > tol) {
      throw NormalizationError("probabilities do not sum to 1 for every (x,y)");
    }
  }

  /// Alice's marginal p(a|x,y).
  double alice_marginal(int a, int x, int y) const { return at(a, +1, x, y) + at(a, -1, x, y); }
  /// Bob's marginal p(b|x,y).
  double bob_marginal(int b, int x, int y) const { return at(+1, b, x, y) + at(-1, b, x, y); }

  /// Largest dependence of either party's marginal on the other party's input.
  double signalling() const {
    double worst = 0.0;
    for (int x = 0; x < m_; ++x) {
      for (int y = 1; y < n_; ++y) {
        worst = std::max(worst, std::abs(alice_marginal(+1, x, y) - alice_marginal(+1, x, 0)));
      }
    }
    for (int y = 0; y < n_; ++y) {
      for (int x = 1; x < m_; ++x) {
        worst = std::max(worst, std::abs(bob_marginal(+1, x, y) - bob_marginal(+1, 0, y)));
      }
    }
    return worst;
  }

  double max_abs_difference(const ProbabilityTable& other) const {
    if (other.m_ != m_ || other.n_ != n_) throw ValidationError("table shapes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i) {
      for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(p_[i][k] - other.p_[i][k]));
    }
    return worst;
  }

 private:
  std::size_t index(int x, int y) const {
    if (x < 0 || x >= m_ || y < 0 || y >= n_) throw ValidationError("setting index out of range");
    return static_cast<std::size_t>(x) * n_ + y;
  }

  int m_ = 0;
  int n_ = 0;
  std::vector<OutcomeDistribution> p_;
};

}  // namespace steering_lab

#endif  // STEERING_LAB_PROBABILITY_TABLE_HPP
