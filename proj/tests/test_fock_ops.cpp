#include <gtest/gtest.h>

#include <cmath>

#include "steering_lab/fock_ops.hpp"

using namespace steering_lab;

TEST(DisplacementSetting, PhaseReducedToCircle) {
  EXPECT_NEAR(DisplacementSetting(0.2, -kPi / 2).theta(), 1.5 * kPi, 1e-15);
  EXPECT_NEAR(DisplacementSetting(0.2, 5 * kPi).theta(), kPi, 1e-12);
  EXPECT_EQ(DisplacementSetting(0.2, kTwoPi).theta(), 0.0);
  EXPECT_FALSE(std::signbit(DisplacementSetting(0.2, -0.0).theta()));
}

TEST(DisplacementSetting, RejectsNegativeAmplitude) {
  EXPECT_THROW(DisplacementSetting(-0.1, 0.0), ValidationError);
  EXPECT_THROW(DisplacementSetting(std::nan(""), 0.0), ValidationError);
  EXPECT_NO_THROW(DisplacementSetting(0.0, 1.0));
}

TEST(CoherentAmplitudes, VacuumAtZeroAmplitude) {
  const CoherentVector v = coherent_amplitudes(DisplacementSetting(0.0, 2.3), 5);
  ASSERT_EQ(v.size(), 6);
  EXPECT_EQ(v[0], cplx(1.0, 0.0));
  for (int n = 1; n <= 5; ++n) EXPECT_EQ(std::abs(v[n]), 0.0);
}

TEST(CoherentAmplitudes, GroundComponent) {
  const CoherentVector v = coherent_amplitudes(DisplacementSetting(0.21, 0.0), 4);
  EXPECT_NEAR(std::norm(v[0]), std::exp(-0.0441), 1e-15);
}

TEST(CoherentAmplitudes, ComponentFormula) {
  const double r = 0.3, th = 1.1;
  const CoherentVector v = coherent_amplitudes(DisplacementSetting(r, th), 6);
  double fact = 1.0;
  for (int n = 0; n <= 6; ++n) {
    if (n > 0) fact *= n;
    const cplx expected = std::exp(-r * r / 2) * std::pow(r, n) / std::sqrt(fact) * std::polar(1.0, n * th);
    EXPECT_NEAR(std::abs(v[n] - expected), 0.0, 1e-15) << n;
  }
}

TEST(CoherentAmplitudes, NormDeficitIsPoissonTail) {
  const CoherentVector v = coherent_amplitudes(DisplacementSetting(0.2, 0.4), 4);
  const double tail = coherent_tail(0.2, 4);
  EXPECT_LT(tail, 1e-9);
  EXPECT_GT(tail, 0.0);
  EXPECT_NEAR(v.squaredNorm(), 1.0 - tail, 1e-15);
  double series = 0.0, term = std::exp(-0.04);
  for (int n = 1; n <= 20; ++n) {
    term *= 0.04 / n;
    if (n >= 5) series += term;
  }
  EXPECT_NEAR(tail, series, 1e-20);
}

TEST(ProjectorFull, VacuumProjector) {
  const FockOperator p = projector_full(DisplacementSetting(0.0, 0.0), 4);
  FockOperator expected = FockOperator::Zero(5, 5);
  expected(0, 0) = 1.0;
  EXPECT_LT((p - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ProjectorFull, TraceEqualsSquaredNorm) {
  const DisplacementSetting a(0.35, 2.0);
  EXPECT_NEAR(projector_full(a, 7).trace().real(), coherent_amplitudes(a, 7).squaredNorm(), 1e-15);
}

TEST(ProjectorFull, HermitianEntryPair) {
  const FockOperator p = projector_full(DisplacementSetting(0.21, kPi / 2), 4);
  EXPECT_NEAR(std::abs(p(0, 1) - std::conj(p(1, 0))), 0.0, 1e-16);
  EXPECT_TRUE(is_hermitian(p));
}

TEST(ProjectorFull, RankOnePsd) {
  const FockOperator p = projector_full(DisplacementSetting(0.4, 0.3), 8);
  Eigen::SelfAdjointEigenSolver<FockOperator> es(p);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
  int rank = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) rank += es.eigenvalues()[i] > 1e-12;
  EXPECT_EQ(rank, 1);
  EXPECT_LE(p.trace().real(), 1.0);
}

TEST(ProjectorQubit, VacuumCase) {
  const QubitOperator p = projector_qubit(DisplacementSetting(0.0, 1.0));
  EXPECT_EQ(p(0, 0), cplx(1.0));
  EXPECT_EQ(std::abs(p(0, 1)), 0.0);
  EXPECT_EQ(std::abs(p(1, 1)), 0.0);
}

TEST(ProjectorQubit, PublishedEntriesAtPointTwo) {
  const QubitOperator p = projector_qubit(DisplacementSetting(0.2, 0.0));
  EXPECT_NEAR(p(0, 0).real(), 0.960789, 5e-7);
  EXPECT_NEAR(p(0, 1).real(), 0.192158, 5e-7);
  EXPECT_NEAR(p(1, 0).real(), 0.192158, 5e-7);
  EXPECT_NEAR(p(1, 1).real(), 0.038432, 5e-7);
  EXPECT_EQ(p(0, 1).imag(), 0.0);
}

TEST(ProjectorQubit, PhaseSitsOnOffDiagonal) {
  const QubitOperator p = projector_qubit(DisplacementSetting(0.233, kPi));
  EXPECT_NEAR(p(0, 1).real(), -std::exp(-0.233 * 0.233) * 0.233, 1e-15);
  EXPECT_NEAR(p(0, 1).imag(), 0.0, 1e-15);
}

TEST(ProjectorQubit, DeterminantVanishes) {
  for (double r : {0.0, 0.1, 0.5, 1.3}) {
    for (double th : {0.0, 0.7, 2.5, 5.9}) {
      EXPECT_NEAR(std::abs(projector_qubit(DisplacementSetting(r, th)).determinant()), 0.0, 1e-15);
    }
  }
}

TEST(Observable, QubitVacuum) {
  const QubitOperator m = observable_qubit(DisplacementSetting(0.0, 0.0));
  EXPECT_EQ(m(0, 0), cplx(1.0));
  EXPECT_EQ(m(1, 1), cplx(-1.0));
  EXPECT_EQ(std::abs(m(0, 1)), 0.0);
}

TEST(Observable, QubitSpectrumInUnitInterval) {
  for (double r : {0.05, 0.3, 0.8, 1.5}) {
    const QubitOperator m = observable_qubit(DisplacementSetting(r, 1.0));
    EXPECT_LE(max_eigenvalue_2x2(m), 1.0 + 1e-15);
    EXPECT_GE(min_eigenvalue_2x2(m), -1.0 - 1e-15);
  }
}

TEST(Observable, FockTraceIdentity) {
  const DisplacementSetting a(0.2, 0.9);
  EXPECT_NEAR(observable_fock(a, 4).trace().real(), 2.0 * projector_full(a, 4).trace().real() - 5.0, 1e-14);
}

TEST(PauliResolution, SigmaXCoefficientAtPoint21) {
  const PauliResolution pr = pauli_resolution(0.21);
  EXPECT_NEAR(pr.x[0], std::exp(0.0441) / 0.42, 1e-14);
  EXPECT_NEAR(pr.x[0], 1.0 / (2.0 * std::exp(-0.0441) * 0.21), 1e-14);
}

TEST(PauliResolution, SigmaYReconstructionAtPoint3) {
  const PauliResolution pr = pauli_resolution(0.3);
  EXPECT_LT((pr.contract(pr.y) - pauli_y()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PauliResolution, SigmaZSkipsQuadraturePhases) {
  const PauliResolution pr = pauli_resolution(0.4);
  EXPECT_EQ(pr.z[1], 0.0);
  EXPECT_EQ(pr.z[3], 0.0);
}

TEST(PauliResolution, SingularAmplitudes) {
  EXPECT_THROW(pauli_resolution(0.0), SingularResolutionError);
  EXPECT_THROW(pauli_resolution(1.0), SingularResolutionError);
  EXPECT_THROW(pauli_resolution(1.2), SingularResolutionError);
}

TEST(Eigenvalues, ClosedFormMatchesSolver) {
  QubitOperator h;
  h << 0.3, cplx(0.1, -0.2), cplx(0.1, 0.2), -0.7;
  Eigen::SelfAdjointEigenSolver<QubitOperator> es(h);
  EXPECT_NEAR(max_eigenvalue_2x2(h), es.eigenvalues()[1], 1e-14);
  EXPECT_NEAR(min_eigenvalue_2x2(h), es.eigenvalues()[0], 1e-14);
  EXPECT_NEAR(max_eigenvalue(FockOperator(h)), es.eigenvalues()[1], 1e-14);
}

TEST(Hermitize, RejectsAsymmetricInput) {
  QubitOperator h;
  h << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(hermitize(h), ValidationError);
  h(1, 0) = 0.5 + 1e-13;
  EXPECT_TRUE(is_hermitian(hermitize(h), 0.0));
}

TEST(FactorialTable, ExactSmallValues) {
  const auto f = factorial_table(10);
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[5], 120.0);
  EXPECT_EQ(f[10], 3628800.0);
}

TEST(CircularDistance, WrapsAround) {
  EXPECT_NEAR(circular_distance(0.1, kTwoPi - 0.1), 0.2, 1e-15);
  EXPECT_NEAR(circular_distance(0.0, kPi), kPi, 1e-15);
}
