// Reference values frozen from the first verified build. The probability values
// were cross-checked against an independent numpy evaluation of the same state
// and measurements; the critical efficiency against a conic-solver run.
#include <gtest/gtest.h>

#include <cmath>

#include "steering_lab/steering_lab.hpp"

using namespace steering_lab;

namespace {

InequalityFamily default_family() { return InequalityFamily::make(0.983, 0.0656, 4, 0.217); }

constexpr double kTight = 1e-14;

}  // namespace

TEST(Oracles, Bounds) {
  const InequalityFamily f = default_family();
  EXPECT_NEAR(qubit_bound(f), 1.0002063393115832, kTight);
  const FullSpaceBound b = fullspace_bound(decompose_g(f), f);
  EXPECT_NEAR(b.s_max, 1.0008400711084251, 1e-13);
  EXPECT_EQ(b.n_max_used, 4);
}

TEST(Oracles, FullSpaceBoundClosedForm) {
  // near the experimental amplitude one strategy wins with bound 1 + r²(1−s)/(1−r²);
  // at r = 0.1 or 0.3 another one takes over
  for (double r : {0.2, 0.21, 0.217}) {
    const InequalityFamily f = InequalityFamily::make(0.983, 0.0656, 4, r);
    const double r2 = r * r;
    EXPECT_NEAR(fullspace_bound(decompose_g(f), f).s_max, 1.0 + r2 * (1.0 - 0.983) / (1.0 - r2), 1e-9) << r;
  }
}

TEST(Oracles, ProbabilityCoefficients) {
  const ProbabilityInequality ineq = build_inequality(default_family());
  EXPECT_NEAR(ineq.c0, -0.048575876445963999, kTight);
  EXPECT_NEAR(ineq.c_pp[0][0], 0.22169088301706225, kTight);
  EXPECT_NEAR(ineq.c_pp[1][3], 0.22402841244445948, kTight);
  EXPECT_NEAR(ineq.c_pm[0][0], 0.065588496722149295, kTight);
  EXPECT_NEAR(ineq.c_mp[0][0], 0.13516420159597139, kTight);
  EXPECT_NEAR(ineq.c_mp[0][1], 0.0, kTight);
}

TEST(Oracles, DecompositionAtExperimentalAmplitude) {
  const CoefficientSet c = decompose_g(InequalityFamily::make(0.983, 0.0656, 4, 0.21));
  EXPECT_NEAR(c.c_r0, -0.045350245841615226, kTight);
  EXPECT_NEAR(c.c_ry[0], 0.53735766385452721, kTight);
  EXPECT_NEAR(c.c_xy[0][0], 0.026569932515960459, kTight);
  EXPECT_NEAR(c.c_x0[0], 0.26153363322523276, kTight);
}

TEST(Oracles, DeltaSAtExperimentalParameters) {
  ModelConfig c;
  c.visibility = 0.97;
  EXPECT_NEAR(theoretical_delta_s(c, default_family()), 0.0020501457680019985, 1e-14);
}

TEST(Oracles, JointProbabilities) {
  const ProbabilityTable t = joint_probabilities(ModelConfig{});
  const OutcomeDistribution expected{0.48129796494668353, 0.23296847785544775, 0.23634386188623271,
                                     0.049389695311635937};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(t.cell(0, 0)[k], expected[k], kTight) << k;
  EXPECT_NEAR(t.at(+1, +1, 1, 2), 0.45754099258031156, kTight);
}

TEST(Oracles, CriticalEfficiencyQuadrature) {
  const CriticalEfficiency ce = critical_eta(0.2, matched_alice_phases(4), 1e-5);
  EXPECT_NEAR(ce.eta_star, 0.41956981100176449, 1e-9);
  EXPECT_NEAR(ce.eta_star, 0.41956, 2e-5);  // conic-solver value
}
