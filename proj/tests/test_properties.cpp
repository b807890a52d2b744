// Seeded randomized checks of structural identities.
#include <gtest/gtest.h>

#include <cmath>

#include "steering_lab/steering_lab.hpp"
#include "test_support.hpp"

using namespace steering_lab;
using steering_lab::testing::lhs_assemblage;
using steering_lab::testing::random_qubit_state;
using steering_lab::testing::best_qubit_violation;
using steering_lab::testing::random_state;
using steering_lab::testing::strategy_table;

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

}  // namespace

TEST(Properties, DecompositionIdentityOnRandomFamilies) {
  Rng rng(101);
  for (int i = 0; i < 100; ++i) {
    const double s = 1.0 - rng.uniform(), t = 1.0 - rng.uniform(), rb = uniform(rng, 0.05, 0.5);
    const InequalityFamily f = InequalityFamily::make(s, t, 4, rb);
    EXPECT_LT(decomposition_residual(decompose_g(f), f), 1e-12) << s << ' ' << t << ' ' << rb;
  }
}

TEST(Properties, DecompositionIdentityBeyondFourSettings) {
  Rng rng(102);
  for (int m : {5, 6, 8, 12}) {
    const InequalityFamily f = InequalityFamily::make(uniform(rng, 0.5, 1), uniform(rng, 0.01, 0.3), m, 0.25);
    EXPECT_LT(decomposition_residual(decompose_g(f), f), 1e-12) << m;
  }
}

TEST(Properties, BoundSoundOverStrategiesAndFockStates) {
  const InequalityFamily f = InequalityFamily::make(0.983, 0.0656, 4, 0.217);
  const ProbabilityInequality ineq = build_inequality(f);
  const CoefficientSet c = decompose_g(f);
  const FullSpaceMatrices g = fullspace_g(c, f, 10);
  Rng rng(103);
  double worst = -1.0;
  for (const auto& l : deterministic_strategies(4)) {
    for (int k = 0; k < 50; ++k) {
      const FockOperator rho = random_state(rng, 2 + k % 9);
      worst = std::max(worst, evaluate_steering(ineq, strategy_table(l, rho, f)).delta_s);
    }
    // the strategy's own top eigenvector comes closest to the bound
    FockOperator sum = g.g_r;
    for (int x = 0; x < 4; ++x) {
      if (l.bit(x)) sum += g.g_x[x];
    }
    Eigen::SelfAdjointEigenSolver<FockOperator> es(sum);
    const CoherentVector top = es.eigenvectors().col(10);
    const double ds = evaluate_steering(ineq, strategy_table(l, top * top.adjoint(), f)).delta_s;
    EXPECT_LE(ds, 1e-9);
    worst = std::max(worst, ds);
  }
  EXPECT_LE(worst, 1e-9);
  EXPECT_GT(worst, -1e-6);  // the bound is attained
}

TEST(Properties, QubitProjectorIsFockBlock) {
  Rng rng(104);
  for (int i = 0; i < 50; ++i) {
    const DisplacementSetting a(uniform(rng, 0, 1.2), uniform(rng, -10, 10));
    const int n_max = 1 + i % 10;
    EXPECT_LT((projector_full(a, n_max).topLeftCorner(2, 2) - projector_qubit(a)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Properties, QubitProjectorTraceAndDeterminant) {
  Rng rng(105);
  for (int i = 0; i < 50; ++i) {
    const double r = uniform(rng, 0, 2);
    const QubitOperator p = projector_qubit(DisplacementSetting(r, uniform(rng, 0, kTwoPi)));
    const double tr = p.trace().real();
    EXPECT_NEAR(tr, std::exp(-r * r) * (1 + r * r), 1e-12);
    EXPECT_GT(tr, 0.0);
    EXPECT_LE(tr, 1.0 + 1e-15);
    EXPECT_NEAR(std::abs(p.determinant()), 0.0, 1e-12);
  }
}

TEST(Properties, PauliResolutionGrid) {
  for (int k = 1; k <= 18; ++k) {
    const double r = 0.05 * k;
    const PauliResolution res = pauli_resolution(r);
    EXPECT_LT((res.contract(res.x) - pauli_x()).cwiseAbs().maxCoeff(), 1e-12) << r;
    EXPECT_LT((res.contract(res.y) - pauli_y()).cwiseAbs().maxCoeff(), 1e-12) << r;
    EXPECT_LT((res.contract(res.z) - pauli_z()).cwiseAbs().maxCoeff(), 1e-12) << r;
  }
}

TEST(Properties, ProjectorsHermitianAndPositive) {
  Rng rng(106);
  for (int i = 0; i < 40; ++i) {
    const DisplacementSetting a(uniform(rng, 0, 1), uniform(rng, 0, kTwoPi));
    const FockOperator full = projector_full(a, 8);
    const QubitOperator q = projector_qubit(a);
    EXPECT_LT((full - full.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((q - q.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_GT(min_eigenvalue(full), -1e-12);
    EXPECT_GT(min_eigenvalue_2x2(q), -1e-12);
  }
}

namespace {

ModelConfig random_config(Rng& rng) {
  ModelConfig c;
  c.eta = rng.uniform();
  c.visibility = rng.uniform();
  c.r_a = uniform(rng, 0, 0.5);
  c.r_b = uniform(rng, 0, 0.5);
  for (double& p : c.alice_phases) p = uniform(rng, 0, kTwoPi);
  return c;
}

}  // namespace

TEST(Properties, NoSignallingAndNormalization) {
  Rng rng(107);
  for (int i = 0; i < 50; ++i) {
    const ProbabilityTable t = joint_probabilities(random_config(rng));
    EXPECT_LT(t.signalling(), 1e-12);
    EXPECT_LT(t.normalization_error(), 1e-12);
    EXPECT_NO_THROW(t.require_normalized(1e-12));
  }
}

TEST(Properties, GlobalPhaseCovariance) {
  Rng rng(108);
  for (int i = 0; i < 30; ++i) {
    ModelConfig c = random_config(rng);
    const ProbabilityTable base = joint_probabilities(c);
    const double shift = uniform(rng, -7, 7);
    for (double& p : c.alice_phases) p += shift;
    for (double& p : c.bob_phases) p += shift;
    EXPECT_LT(joint_probabilities(c).max_abs_difference(base), 1e-12);
  }
}

TEST(Properties, OracleAgreementOnRandomConfigs) {
  Rng rng(109);
  for (int i = 0; i < 20; ++i) {
    ModelConfig c;
    c.eta = std::array{0.0, 0.3, 0.52, 1.0}[i % 4];
    c.r_a = uniform(rng, 0, 0.3);
    c.r_b = uniform(rng, 0, 0.3);
    for (double& p : c.alice_phases) p = uniform(rng, 0, kTwoPi);
    EXPECT_LT(oracle_probabilities(c, 8).max_abs_difference(joint_probabilities(c)), 1e-6) << i;
  }
}

TEST(Properties, AssemblageConsistentWithProbabilities) {
  Rng rng(110);
  for (int i = 0; i < 20; ++i) {
    const ModelConfig c = random_config(rng);
    const Assemblage a = compute_assemblage(make_state(c.eta, c.visibility), c.r_a, c.alice_phases);
    const ProbabilityTable t = joint_probabilities(c);
    double tr = a.sigma_r.trace().real();
    EXPECT_NEAR(tr, 1.0, 1e-12);
    EXPECT_LT(a.signalling(), 1e-12);
    for (int x = 0; x < 4; ++x) {
      EXPECT_GT(min_eigenvalue_2x2(a.plus[x]), -1e-12);
      EXPECT_GT(min_eigenvalue_2x2(a.minus[x]), -1e-12);
      for (int y = 0; y < 4; ++y) {
        const QubitOperator pb = projector_qubit(DisplacementSetting(c.r_b, c.bob_phases[y]));
        EXPECT_NEAR((pb * a.plus[x]).trace().real(), t.at(+1, +1, x, y), 1e-12);
        EXPECT_NEAR((pb * a.minus[x]).trace().real(), t.at(-1, +1, x, y), 1e-12);
      }
    }
  }
}

TEST(Properties, CertificatesOnRandomLhsMixtures) {
  Rng rng(111);
  for (int i = 0; i < 15; ++i) {
    const int m = 4 + i % 2;
    const int k = 1 + static_cast<int>(rng.next() % 5);
    std::vector<std::uint32_t> labels;
    std::vector<double> w;
    std::vector<QubitOperator> states;
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      labels.push_back(static_cast<std::uint32_t>(rng.next() % (1u << m)));
      w.push_back(0.05 + rng.uniform());
      total += w.back();
      states.push_back(random_qubit_state(rng));
    }
    for (double& v : w) v /= total;
    const Assemblage a = lhs_assemblage(m, labels, w, states);
    const LhsResult r = lhs_feasible(a);
    ASSERT_EQ(r.status, LhsStatus::feasible) << i;
    EXPECT_LE(certificate_residual(*r.certificate, a), r.certificate->residual + 1e-12);
    EXPECT_LE(r.certificate->residual, 1e-9);
    EXPECT_GE(certificate_min_eigenvalue(*r.certificate), -1e-9);
  }
}

TEST(Properties, WitnessesNeverFlagLhsAssemblages) {
  Rng rng(112);
  std::vector<SteeringWitness> witnesses;
  for (double r_a : {0.1, 0.2, 0.3}) {
    const LhsResult r = lhs_feasible(LhsProblem::for_lossy_state(r_a, matched_alice_phases(4)).at(0.8));
    ASSERT_EQ(r.status, LhsStatus::infeasible);
    ASSERT_TRUE(r.witness.has_value());
    witnesses.push_back(*r.witness);
  }
  for (int i = 0; i < 100; ++i) {
    const std::vector<std::uint32_t> labels{static_cast<std::uint32_t>(rng.next() % 16),
                                            static_cast<std::uint32_t>(rng.next() % 16)};
    const double w = rng.uniform();
    const Assemblage a = lhs_assemblage(4, labels, {w, 1 - w}, {random_qubit_state(rng), random_qubit_state(rng)});
    for (const auto& wit : witnesses) EXPECT_FALSE(wit.certifies(a));
  }
}

TEST(Properties, CrossValidationAroundCriticalEfficiency) {
  const std::vector<double> phases = matched_alice_phases(4);
  const double eta_star = critical_eta(0.2, phases, 1e-4).eta_star;
  const LhsProblem p = LhsProblem::for_lossy_state(0.2, phases);
  EXPECT_EQ(lhs_feasible(p.at(eta_star - 0.02)).status, LhsStatus::feasible);
  EXPECT_LE(best_qubit_violation(p.at(eta_star - 0.02)), 1e-9);
  EXPECT_GT(best_qubit_violation(p.at(eta_star + 0.02)), 0.0);
}

TEST(Properties, CriticalEfficiencyRotationInvariant) {
  const std::vector<double> base{0.0, 1.4, 3.3, 4.6};
  const double ref = critical_eta(0.2, base, 1e-3).eta_star;
  for (double shift : {0.37, 2.0, -1.1}) {
    std::vector<double> moved = base;
    for (double& v : moved) v += shift;
    EXPECT_NEAR(critical_eta(0.2, moved, 1e-3).eta_star, ref, 1e-3) << shift;
  }
}
