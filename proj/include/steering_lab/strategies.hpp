#ifndef STEERING_LAB_STRATEGIES_HPP
#define STEERING_LAB_STRATEGIES_HPP

#include <cstdint>
#include <vector>

#include "steering_lab/errors.hpp"

namespace steering_lab {

inline constexpr int kMaxSettings = 16;

/// Alice's deterministic response l ∈ {0,1}^m: l_x = 1 means outcome + on input x.
/// The label reads as a binary number with input 0 as the most significant digit,
/// so index 1 of m = 4 is "0001".
class DeterministicStrategy {
 public:
  DeterministicStrategy(int m, std::uint32_t label) : m_(m), label_(label) {
    if (m < 1 || m > kMaxSettings) throw ValidationError("number of settings must be in [1, 16]");
    if (label >= (std::uint32_t{1} << m)) throw ValidationError("strategy label out of range");
  }

  int size() const noexcept { return m_; }
  std::uint32_t label() const noexcept { return label_; }

  /// l_x for input x in [0, m).
  int bit(int x) const noexcept { return static_cast<int>((label_ >> (m_ - 1 - x)) & 1u); }

  /// D_λ(a|x) with a = +1 or -1.
  double response(int a, int x) const noexcept {
    return a > 0 ? static_cast<double>(bit(x)) : static_cast<double>(1 - bit(x));
  }

  bool operator==(const DeterministicStrategy&) const = default;

 private:
  int m_;
  std::uint32_t label_;
};

inline std::vector<DeterministicStrategy> deterministic_strategies(int m) {
  if (m < 1 || m > kMaxSettings) throw ValidationError("number of settings must be in [1, 16]");
  std::vector<DeterministicStrategy> out;
  const std::uint32_t count = std::uint32_t{1} << m;
  out.reserve(count);
  for (std::uint32_t l = 0; l < count; ++l) out.emplace_back(m, l);
  return out;
}

}  // namespace steering_lab

#endif  // STEERING_LAB_STRATEGIES_HPP
