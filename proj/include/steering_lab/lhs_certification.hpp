#ifndef STEERING_LAB_LHS_CERTIFICATION_HPP
#define STEERING_LAB_LHS_CERTIFICATION_HPP

// Local-hidden-state feasibility of a qubit assemblage, critical efficiency by
// bisection, and downhill-simplex search over Alice's measurement phases.
//
// Feasibility asks for σ_λ ⪰ 0 (one 2x2 block per deterministic strategy λ)
// with Σ_λ D_λ(a|x) σ_λ = σ_{a|x}. It is solved by Dykstra's alternating
// projections between that affine set and the product of PSD cones. Each 2x2
// Hermitian block is carried as four real components (h00, h11, Re h01, Im h01);
// the affine constraint acts on every component separately, so its projection
// is one small pseudo-inverse shared by all four.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "steering_lab/errors.hpp"
#include "steering_lab/fock_ops.hpp"
#include "steering_lab/nelder_mead.hpp"
#include "steering_lab/parallel.hpp"
#include "steering_lab/quantum_model.hpp"
#include "steering_lab/random.hpp"
#include "steering_lab/strategies.hpp"

namespace steering_lab {

struct LhsOptions {
  double tol = 1e-9;
  int max_iterations = 200000;
  int check_interval = 25;
  double plateau_rel_change = 1e-12;
  int plateau_window = 1000;
  bool whiten = true;
  int barrier_steps = 300;  // Newton steps of the dual witness search
  int acceleration_memory = 5;
};

enum class LhsStatus { feasible, infeasible, indeterminate };

inline const char* to_string(LhsStatus s) {
  switch (s) {
    case LhsStatus::feasible: return "feasible";
    case LhsStatus::infeasible: return "infeasible";
    default: return "indeterminate";
  }
}

/// Hidden states σ_λ, ordered like deterministic_strategies(m).
struct LhsCertificate {
  std::vector<QubitOperator> hidden_states;
  double residual = 0.0;
};

/// Linear steering functional Σ_{a,x} Tr[F_{a|x} σ_{a|x}]. Any LHS
/// assemblage with reduced state σ_R scores at least lhs_minimum_for(σ_R), so
/// value < lhs_minimum proves steerability of the assemblage it was found for.
struct SteeringWitness {
  std::vector<QubitOperator> f_plus;
  std::vector<QubitOperator> f_minus;
  double value = 0.0;
  double lhs_minimum = 0.0;

  double margin() const noexcept { return lhs_minimum - value; }

  double evaluate(const Assemblage& sigma) const {
    double v = 0.0;
    for (std::size_t x = 0; x < f_plus.size(); ++x) {
      v += (f_plus[x] * sigma.plus[x]).trace().real() + (f_minus[x] * sigma.minus[x]).trace().real();
    }
    return v;
  }

  /// G_λ = Σ_x F_{λ(x)|x} for every deterministic strategy λ.
  std::vector<QubitOperator> strategy_operators() const {
    const int m = static_cast<int>(f_plus.size());
    std::vector<QubitOperator> g;
    for (const auto& lam : deterministic_strategies(m)) {
      QubitOperator acc = QubitOperator::Zero();
      for (int x = 0; x < m; ++x) acc += lam.response(+1, x) > 0.5 ? f_plus[x] : f_minus[x];
      g.push_back(acc);
    }
    return g;
  }

  /// Lower bound on the functional over LHS assemblages with reduced state
  /// sigma_r. Two bounds hold: G_λ ⪰ μ𝟙 gives μ·Tr σ_R, and
  /// G_λ ⪰ ν σ_R⁻¹ gives 2ν. The larger is returned.
  double lhs_minimum_for(const QubitOperator& sigma_r) const {
    const auto g = strategy_operators();
    double mu = std::numeric_limits<double>::infinity();
    for (const auto& op : g) mu = std::min(mu, min_eigenvalue_2x2(op));
    double bound = mu * sigma_r.trace().real();
    Eigen::SelfAdjointEigenSolver<QubitOperator> es(sigma_r);
    if (es.eigenvalues().minCoeff() > 1e-12 * es.eigenvalues().maxCoeff()) {
      const QubitOperator root = es.operatorSqrt();
      double nu = std::numeric_limits<double>::infinity();
      for (const auto& op : g) nu = std::min(nu, min_eigenvalue_2x2(QubitOperator(root * op * root)));
      bound = std::max(bound, 2.0 * nu);
    }
    // Rounding allowance.
    return bound - 1e-12 * (1.0 + std::abs(bound));
  }

  bool certifies(const Assemblage& sigma) const { return evaluate(sigma) < lhs_minimum_for(sigma.sigma_r); }
};

struct LhsResult {
  LhsStatus status = LhsStatus::indeterminate;
  std::optional<LhsCertificate> certificate;
  std::optional<SteeringWitness> witness;
  double residual = std::numeric_limits<double>::infinity();  // best constraint violation reached
  int iterations = 0;
};

/// max_{a,x} max-entry |Σ_λ D_λ(a|x) σ_λ − σ_{a|x}|, by direct operator arithmetic.
inline double certificate_residual(const LhsCertificate& cert, const Assemblage& sigma) {
  const int m = sigma.settings();
  const auto strategies = deterministic_strategies(m);
  if (cert.hidden_states.size() != strategies.size()) throw ValidationError("certificate size mismatch");
  double worst = 0.0;
  for (int x = 0; x < m; ++x) {
    for (int a : {+1, -1}) {
      QubitOperator acc = QubitOperator::Zero();
      for (std::size_t l = 0; l < strategies.size(); ++l) acc += strategies[l].response(a, x) * cert.hidden_states[l];
      worst = std::max(worst, (acc - sigma.sigma(a, x)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

inline double certificate_min_eigenvalue(const LhsCertificate& cert) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& h : cert.hidden_states) worst = std::min(worst, min_eigenvalue_2x2(h));
  return worst;
}

// Above this many settings the Newton searches are skipped (their Hessians
// grow with 2^m); the projection iteration alone is used.
inline constexpr int kMaxBarrierSettings = 6;

class LhsFeasibilitySolver {
 public:
  explicit LhsFeasibilitySolver(int m) : m_(m), strategies_(deterministic_strategies(m)) {
    const int n = static_cast<int>(strategies_.size());
    response_ = Eigen::MatrixXd(2 * m, n);
    for (int l = 0; l < n; ++l) {
      for (int x = 0; x < m; ++x) {
        response_(2 * x, l) = strategies_[l].response(+1, x);
        response_(2 * x + 1, l) = strategies_[l].response(-1, x);
      }
    }
    pinv_ = response_.completeOrthogonalDecomposition().pseudoInverse();
    null_projector_ = Eigen::MatrixXd::Identity(n, n) - pinv_ * response_;
    if (m <= kMaxBarrierSettings) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(response_, Eigen::ComputeFullV);
      svd.setThreshold(1e-10);
      kernel_ = svd.matrixV().rightCols(n - svd.rank());
    }
  }

  int settings() const noexcept { return m_; }
  int hidden_states() const noexcept { return static_cast<int>(strategies_.size()); }

  /// Component matrix of an assemblage: row 2x is σ_{+|x}, row 2x+1 is σ_{−|x}.
  Eigen::MatrixXd targets(const Assemblage& sigma) const {
    if (sigma.settings() != m_) throw ValidationError("assemblage has the wrong number of settings");
    Eigen::MatrixXd b(2 * m_, 4);
    for (int x = 0; x < m_; ++x) {
      b.row(2 * x) = components(sigma.plus[x]);
      b.row(2 * x + 1) = components(sigma.minus[x]);
    }
    return b;
  }

  /// Dykstra iteration. The problem is first congruence-transformed by
  /// S = σ_R^{-1/2} (when σ_R is invertible), which preserves both the PSD
  /// cones and the linear constraints but conditions the blocks much better.
  /// Two runs are interleaved: a plain one, whose displacement yields the
  /// witnesses, and an Anderson-accelerated one, which reaches feasible points
  /// far sooner. Each is capped at max_iterations; certificates and witnesses
  /// are checked in, and mapped back to, the original frame.
  LhsResult solve(const Assemblage& sigma, const LhsOptions& opt = {}) const {
    if (sigma.signalling() > 1e-9) throw ValidationError("assemblage is signalling");
    if (opt.check_interval < 1 || opt.max_iterations < 1) throw ValidationError("iteration settings must be >= 1");

    QubitOperator whiten = QubitOperator::Identity();
    QubitOperator unwhiten = QubitOperator::Identity();
    {
      Eigen::SelfAdjointEigenSolver<QubitOperator> es(sigma.sigma_r);
      if (opt.whiten && es.eigenvalues().minCoeff() > 1e-9 * es.eigenvalues().maxCoeff()) {
        whiten = es.operatorInverseSqrt();
        unwhiten = es.operatorSqrt();
      }
    }
    const Eigen::MatrixXd b = targets(transform(sigma, whiten));
    const Eigen::MatrixXd offset = pinv_ * b;

    LhsResult out;
    auto accept = [&](const Eigen::MatrixXd& blocks) {
      LhsCertificate c;
      for (Eigen::Index l = 0; l < blocks.rows(); ++l) {
        c.hidden_states.push_back(unwhiten * from_components(blocks.row(l)) * unwhiten);
      }
      c.residual = certificate_residual(c, sigma);
      out.status = LhsStatus::feasible;
      out.residual = std::min(out.residual, c.residual);
      out.certificate = std::move(c);
    };
    auto try_witness = [&](const Eigen::MatrixXd& direction) -> bool {
      auto w = witness_from(direction, whiten, sigma);
      if (!w) return false;
      const bool ok = w->margin() > 0.0;
      if (ok || !out.witness || w->margin() > out.witness->margin()) out.witness = std::move(w);
      return ok;
    };

    if (opt.barrier_steps > 0 && m_ <= kMaxBarrierSettings) {
      if (auto w = barrier_witness(b, whiten, sigma, opt.barrier_steps, &out.witness)) {
        out.status = LhsStatus::infeasible;
        out.witness = std::move(w);
        return out;
      }
      if (auto interior = barrier_interior(offset, opt.barrier_steps)) {
        if (min_block_eigenvalue(*interior) >= 0.0 && constraint_violation(*interior, b) <= opt.tol) {
          accept(*interior);
          return out;
        }
      }
    }

    DykstraRun plain(*this, offset, 0);
    DykstraRun fast(*this, offset, opt.acceleration_memory);
    std::vector<double> history;  // plain-run residual at each check
    const int window_checks = std::max(1, opt.plateau_window / opt.check_interval);

    for (int it = opt.check_interval; it < opt.max_iterations + opt.check_interval; it += opt.check_interval) {
      const int chunk = std::min(opt.check_interval, opt.max_iterations - (it - opt.check_interval));
      out.iterations = std::min(it, opt.max_iterations);

      if (opt.acceleration_memory > 0) {
        fast.advance(chunk);
        const double res_fast = constraint_violation(fast.psd, b);
        out.residual = std::min(out.residual, res_fast);
        if (res_fast <= opt.tol) {
          accept(fast.psd);
          return out;
        }
        if (min_block_eigenvalue(fast.x) >= 0.0) {
          accept(fast.x);
          return out;
        }
      }

      plain.advance(chunk);
      const double res_z = constraint_violation(plain.z, b);
      out.residual = std::min(out.residual, res_z);
      if (res_z <= opt.tol) {
        accept(plain.z);
        return out;
      }
      if (min_block_eigenvalue(plain.x) >= 0.0) {
        accept(plain.x);
        return out;
      }

      // Dual evidence from the displacement between the two sets. −q sums the
      // per-sweep displacement, so it averages toward the gap direction.
      const Eigen::MatrixXd gap = plain.z - plain.x;
      Eigen::MatrixXd xp = plain.x;
      project_psd(xp);
      bool found = try_witness(gap) || try_witness(xp - plain.x) || try_witness(-plain.q);
      if (found) {
        out.status = LhsStatus::infeasible;
        return out;
      }

      history.push_back(res_z);
      if (static_cast<int>(history.size()) > window_checks) {
        const double old = history[history.size() - 1 - window_checks];
        if (std::abs(res_z - old) <= opt.plateau_rel_change * res_z && res_z > 10.0 * opt.tol) {
          out.status = LhsStatus::infeasible;
          return out;
        }
      }
    }
    out.status = LhsStatus::indeterminate;
    return out;
  }


 private:
  // One Dykstra sequence: x = P_A(z), z ← P_K(x + q), q ← x + q − z, with
  // optional type-II Anderson extrapolation on u = (z, q) that restarts
  // whenever the fixed-point residual grows.
  struct DykstraRun {
    const LhsFeasibilitySolver& solver;
    const Eigen::MatrixXd& offset;
    int memory;
    Eigen::Index half;
    Eigen::MatrixXd x, z, q, y;
    Eigen::MatrixXd psd;  // z as left by the last sweep, before extrapolation
    Eigen::MatrixXd du, dg;
    Eigen::VectorXd u, tu, g, u_prev, g_prev, tu_prev;
    int stored = 0;
    bool have_prev = false;
    double g_norm_prev = std::numeric_limits<double>::infinity();

    DykstraRun(const LhsFeasibilitySolver& s, const Eigen::MatrixXd& off, int mem)
        : solver(s),
          offset(off),
          memory(std::max(0, mem)),
          half(off.size()) {
      z = offset;
      q = Eigen::MatrixXd::Zero(off.rows(), 4);
      x = z;
      y = z;
      if (memory > 0) {
        du.resize(2 * half, memory);
        dg.resize(2 * half, memory);
        u.resize(2 * half);
        tu.resize(2 * half);
      }
    }

    void pack(Eigen::VectorXd& v) const {
      v.head(half) = Eigen::Map<const Eigen::VectorXd>(z.data(), half);
      v.tail(half) = Eigen::Map<const Eigen::VectorXd>(q.data(), half);
    }
    void unpack(const Eigen::VectorXd& v) {
      z = Eigen::Map<const Eigen::MatrixXd>(v.data(), z.rows(), 4);
      q = Eigen::Map<const Eigen::MatrixXd>(v.data() + half, q.rows(), 4);
    }

    void sweep() {
      x.noalias() = solver.null_projector_ * z;
      x += offset;
      y = x + q;
      z = y;
      project_psd(z);
      q = y - z;
      psd = z;
    }

    void advance(int iterations) {
      for (int i = 0; i < iterations; ++i) {
        if (memory == 0) {
          sweep();
          continue;
        }
        pack(u);
        sweep();
        pack(tu);
        g = tu - u;
        const double g_norm = g.norm();
        if (have_prev && g_norm > 2.0 * g_norm_prev) {
          stored = 0;
          have_prev = false;
          g_norm_prev = std::numeric_limits<double>::infinity();
          unpack(tu_prev);
          continue;
        }
        if (have_prev) {
          if (stored == memory) {
            du.leftCols(memory - 1) = du.rightCols(memory - 1).eval();
            dg.leftCols(memory - 1) = dg.rightCols(memory - 1).eval();
            --stored;
          }
          du.col(stored) = u - u_prev;
          dg.col(stored) = g - g_prev;
          ++stored;
        }
        u_prev = u;
        g_prev = g;
        tu_prev = tu;
        have_prev = true;
        g_norm_prev = g_norm;
        if (stored > 0) {
          const Eigen::VectorXd gamma = dg.leftCols(stored).completeOrthogonalDecomposition().solve(g);
          const Eigen::VectorXd next = tu - (du.leftCols(stored) + dg.leftCols(stored)) * gamma;
          if (next.allFinite()) unpack(next);
        }
      }
    }
  };

  // Witness F = S·pinv(D)ᵀW·S for a direction W in the whitened frame.
  std::optional<SteeringWitness> witness_from(const Eigen::MatrixXd& direction, const QubitOperator& whiten,
                                              const Assemblage& sigma) const {
    return make_witness(pinv_.transpose() * direction, whiten, sigma);
  }

  // Functional with whitened-frame components f (row 2x: F_{+|x}, row 2x+1:
  // F_{−|x}), mapped back by S, normalized to unit size and scored on sigma.
  std::optional<SteeringWitness> make_witness(const Eigen::MatrixXd& f, const QubitOperator& whiten,
                                              const Assemblage& sigma) const {
    SteeringWitness w;
    double scale = 0.0;
    for (int x = 0; x < m_; ++x) {
      w.f_plus.push_back(whiten * from_components(f.row(2 * x)) * whiten);
      w.f_minus.push_back(whiten * from_components(f.row(2 * x + 1)) * whiten);
      scale = std::max({scale, w.f_plus.back().cwiseAbs().maxCoeff(), w.f_minus.back().cwiseAbs().maxCoeff()});
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) return std::nullopt;
    for (int x = 0; x < m_; ++x) {
      w.f_plus[x] /= scale;
      w.f_minus[x] /= scale;
    }
    w.value = w.evaluate(sigma);
    w.lhs_minimum = w.lhs_minimum_for(sigma.sigma_r);
    return w;
  }

  // Damped-Newton barrier search for a separating functional:
  //   minimize  t·⟨F, B⟩ − Σ_λ log det(G_λ(F) − 𝟙),  G_λ = Σ_x F_{λ(x)|x},
  // with t raised after each centering. Every LHS model scores at least
  // Tr σ_R on such F, so the objective is unbounded below exactly when the
  // assemblage is steerable, and the iterates then run into certifying F.
  std::optional<SteeringWitness> barrier_witness(const Eigen::MatrixXd& b, const QubitOperator& whiten,
                                                 const Assemblage& sigma, int max_steps,
                                                 std::optional<SteeringWitness>* best = nullptr) const {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;
    const int rows = 2 * m_;
    const int dim = 4 * rows;
    const int n = hidden_states();
    constexpr std::array<double, 4> kWeights{1.0, 1.0, 2.0, 2.0};

    Eigen::VectorXd cost(dim);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < 4; ++c) cost[4 * r + c] = kWeights[c] * b(r, c);
    }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(dim);
    for (int r = 0; r < rows; ++r) f[4 * r] = f[4 * r + 1] = 2.0 / m_;  // G_λ = 2·𝟙

    Eigen::MatrixXd g_blocks(n, 4);
    auto strategy_blocks = [&](const Eigen::VectorXd& v) {
      g_blocks.noalias() = response_.transpose() * Eigen::Map<const RowMat>(v.data(), rows, 4);
    };
    // −Σ log det(G − 𝟙); +∞ outside the domain.
    auto barrier = [&](const Eigen::VectorXd& v) {
      strategy_blocks(v);
      double acc = 0.0;
      for (int l = 0; l < n; ++l) {
        const double a = g_blocks(l, 0) - 1.0, d = g_blocks(l, 1) - 1.0;
        const double det = a * d - g_blocks(l, 2) * g_blocks(l, 2) - g_blocks(l, 3) * g_blocks(l, 3);
        if (!(a > 0.0) || !(det > 0.0)) return std::numeric_limits<double>::infinity();
        acc -= std::log(det);
      }
      return acc;
    };

    std::vector<std::vector<int>> active(n);
    for (int l = 0; l < n; ++l) {
      for (int r = 0; r < rows; ++r) {
        if (response_(r, l) > 0.5) active[l].push_back(r);
      }
    }

    double t = 1.0;
    Eigen::VectorXd grad(dim), step(dim), trial(dim);
    Eigen::MatrixXd hess(dim, dim);
    for (int it = 0; it < max_steps; ++it) {
      strategy_blocks(f);
      grad = t * cost;
      hess.setZero();
      for (int l = 0; l < n; ++l) {
        const double a = g_blocks(l, 0) - 1.0, d = g_blocks(l, 1) - 1.0;
        const double re = g_blocks(l, 2), im = g_blocks(l, 3);
        const double det = a * d - re * re - im * im;
        const Eigen::Vector4d ddet(d, a, -2.0 * re, -2.0 * im);
        Eigen::Matrix4d local = ddet * ddet.transpose() / (det * det);
        local(0, 1) -= 1.0 / det;
        local(1, 0) -= 1.0 / det;
        local(2, 2) += 2.0 / det;
        local(3, 3) += 2.0 / det;
        const Eigen::Vector4d lgrad = -ddet / det;
        for (int r : active[l]) {
          grad.segment<4>(4 * r) += lgrad;
          for (int s2 : active[l]) hess.block<4, 4>(4 * r, 4 * s2) += local;
        }
      }
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
      step = hess.ldlt().solve(-grad);
      const double slope = grad.dot(step);
      if (!step.allFinite() || !(slope < 0.0)) break;
      if (-slope < 1e-10) {
        t *= 10.0;
        if (t > 1e15) break;
        continue;
      }
      const double phi = t * cost.dot(f) + barrier(f);
      double s = 1.0;
      bool moved = false;
      for (int k = 0; k < 80; ++k, s *= 0.5) {
        trial = f + s * step;
        const double phi_trial = t * cost.dot(trial) + barrier(trial);
        if (phi_trial <= phi + 0.25 * s * slope) {
          moved = true;
          break;
        }
      }
      if (!moved) break;
      f = trial;
      // Long steps along a recession direction are what steerable
      // assemblages produce; test every iterate.
      Eigen::MatrixXd fm = Eigen::Map<const RowMat>(f.data(), rows, 4);
      auto w = make_witness(fm, whiten, sigma);
      if (w && w->margin() > 0.0) return w;
      if (best && w && (!*best || w->margin() > (*best)->margin())) *best = w;
    }
    return std::nullopt;
  }

  // Phase-I barrier for an interior LHS model: over X = X₀ + N·Y (N spans
  // ker D, so D X = B holds identically) maximize t with X_λ ⪰ t·𝟙, via
  //   minimize  −c·t − Σ_λ log det(X_λ − t·𝟙)
  // with c raised after each centering. Returns blocks as soon as t > 0.
  std::optional<Eigen::MatrixXd> barrier_interior(const Eigen::MatrixXd& offset, int max_steps) const {
    const int n = hidden_states();
    const int k = static_cast<int>(kernel_.cols());
    const int dim = 4 * k + 1;
    if (k == 0) return std::nullopt;

    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd blocks(n, 4);
    auto assemble = [&](const Eigen::VectorXd& w) {
      blocks = offset;
      for (int j = 0; j < k; ++j) {
        for (int c = 0; c < 4; ++c) blocks.col(c) += w[4 * j + c] * kernel_.col(j);
      }
      blocks.col(0).array() -= w[dim - 1];
      blocks.col(1).array() -= w[dim - 1];
    };
    auto barrier = [&](const Eigen::VectorXd& w) {
      assemble(w);
      double acc = 0.0;
      for (int l = 0; l < n; ++l) {
        const double a = blocks(l, 0), d = blocks(l, 1);
        const double det = a * d - blocks(l, 2) * blocks(l, 2) - blocks(l, 3) * blocks(l, 3);
        if (!(a > 0.0) || !(det > 0.0)) return std::numeric_limits<double>::infinity();
        acc -= std::log(det);
      }
      return acc;
    };
    v[dim - 1] = min_block_eigenvalue(offset) - 1.0;

    double c = 1.0;
    Eigen::VectorXd grad(dim), step(dim), trial(dim);
    Eigen::MatrixXd hess(dim, dim);
    Eigen::MatrixXd jac(4, dim);
    for (int it = 0; it < max_steps; ++it) {
      if (v[dim - 1] > 0.0) {
        assemble(v);
        blocks.col(0).array() += v[dim - 1];
        blocks.col(1).array() += v[dim - 1];
        return blocks;
      }
      assemble(v);
      grad.setZero();
      grad[dim - 1] = -c;
      hess.setZero();
      for (int l = 0; l < n; ++l) {
        const double a = blocks(l, 0), d = blocks(l, 1), re = blocks(l, 2), im = blocks(l, 3);
        const double det = a * d - re * re - im * im;
        const Eigen::Vector4d ddet(d, a, -2.0 * re, -2.0 * im);
        Eigen::Matrix4d local = ddet * ddet.transpose() / (det * det);
        local(0, 1) -= 1.0 / det;
        local(1, 0) -= 1.0 / det;
        local(2, 2) += 2.0 / det;
        local(3, 3) += 2.0 / det;
        jac.setZero();
        for (int j = 0; j < k; ++j) {
          for (int cc = 0; cc < 4; ++cc) jac(cc, 4 * j + cc) = kernel_(l, j);
        }
        jac(0, dim - 1) = -1.0;
        jac(1, dim - 1) = -1.0;
        grad.noalias() += jac.transpose() * (-ddet / det);
        hess.noalias() += jac.transpose() * local * jac;
      }
      hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().maxCoeff());
      step = hess.ldlt().solve(-grad);
      const double slope = grad.dot(step);
      if (!step.allFinite() || !(slope < 0.0)) break;
      if (-slope < 1e-10) {
        c *= 10.0;
        if (c > 1e15) break;
        continue;
      }
      const double phi = -c * v[dim - 1] + barrier(v);
      double s = 1.0;
      bool moved = false;
      for (int kk = 0; kk < 80; ++kk, s *= 0.5) {
        trial = v + s * step;
        if (-c * trial[dim - 1] + barrier(trial) <= phi + 0.25 * s * slope) {
          moved = true;
          break;
        }
      }
      if (!moved) break;
      v = trial;
    }
    return std::nullopt;
  }

  static Assemblage transform(const Assemblage& sigma, const QubitOperator& s) {
    Assemblage out;
    for (int x = 0; x < sigma.settings(); ++x) {
      out.plus.push_back(s * sigma.plus[x] * s);
      out.minus.push_back(s * sigma.minus[x] * s);
    }
    out.sigma_r = s * sigma.sigma_r * s;
    return out;
  }

  static Eigen::RowVector4d components(const QubitOperator& h) {
    return {h(0, 0).real(), h(1, 1).real(), h(0, 1).real(), h(0, 1).imag()};
  }

  static QubitOperator from_components(const Eigen::RowVector4d& c) {
    QubitOperator h;
    h(0, 0) = c[0];
    h(1, 1) = c[1];
    h(0, 1) = cplx(c[2], c[3]);
    h(1, 0) = cplx(c[2], -c[3]);
    return h;
  }

  static double block_min_eigenvalue(double a, double d, double re, double im) {
    return 0.5 * (a + d) - std::hypot(0.5 * (a - d), std::hypot(re, im));
  }

  static double min_block_eigenvalue(const Eigen::MatrixXd& blocks) {
    double worst = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < blocks.rows(); ++l) {
      worst = std::min(worst, block_min_eigenvalue(blocks(l, 0), blocks(l, 1), blocks(l, 2), blocks(l, 3)));
    }
    return worst;
  }

  // Frobenius-nearest PSD matrix, block by block (closed-form 2x2 spectrum).
  static void project_psd(Eigen::MatrixXd& blocks) {
    for (Eigen::Index l = 0; l < blocks.rows(); ++l) {
      const double a = blocks(l, 0), d = blocks(l, 1), re = blocks(l, 2), im = blocks(l, 3);
      const double mid = 0.5 * (a + d);
      const double rad = std::hypot(0.5 * (a - d), std::hypot(re, im));
      const double lo = mid - rad;
      const double hi = mid + rad;
      if (lo >= 0.0) continue;
      if (hi <= 0.0) {
        blocks.row(l).setZero();
        continue;
      }
      // hi · (projector on the top eigenvector) = hi/(hi−lo) · (H − lo·𝟙)
      const double scale = hi / (hi - lo);
      blocks(l, 0) = scale * (a - lo);
      blocks(l, 1) = scale * (d - lo);
      blocks(l, 2) = scale * re;
      blocks(l, 3) = scale * im;
    }
  }

  double constraint_violation(const Eigen::MatrixXd& blocks, const Eigen::MatrixXd& b) const {
    const Eigen::MatrixXd diff = response_ * blocks - b;
    double worst = 0.0;
    for (Eigen::Index r = 0; r < diff.rows(); ++r) {
      worst = std::max({worst, std::abs(diff(r, 0)), std::abs(diff(r, 1)), std::hypot(diff(r, 2), diff(r, 3))});
    }
    return worst;
  }

  int m_;
  std::vector<DeterministicStrategy> strategies_;
  Eigen::MatrixXd response_;        // D: (2m) x 2^m
  Eigen::MatrixXd pinv_;            // D⁺
  Eigen::MatrixXd null_projector_;  // 𝟙 − D⁺D
  Eigen::MatrixXd kernel_;          // orthonormal basis of ker D (small m only)
};

inline LhsResult lhs_feasible(const Assemblage& sigma, const LhsOptions& opt = {}) {
  return LhsFeasibilitySolver(sigma.settings()).solve(sigma, opt);
}

/// (1−η)·σ^US + η·σ^S, the assemblage of the lossy state at efficiency η.
inline Assemblage mix_assemblages(const Assemblage& unsteerable, const Assemblage& steerable, double eta) {
  Assemblage out;
  for (int x = 0; x < steerable.settings(); ++x) {
    out.plus.push_back((1.0 - eta) * unsteerable.plus[x] + eta * steerable.plus[x]);
    out.minus.push_back((1.0 - eta) * unsteerable.minus[x] + eta * steerable.minus[x]);
  }
  out.sigma_r = (1.0 - eta) * unsteerable.sigma_r + eta * steerable.sigma_r;
  return out;
}

/// Endpoints σ^S (η = 1) and σ^US (η = 0) of the lossy-state assemblage.
struct LhsProblem {
  Assemblage steerable;
  Assemblage unsteerable;

  static LhsProblem for_lossy_state(double r_a, const std::vector<double>& alice_phases, double visibility = 1.0) {
    return {compute_assemblage(make_state(1.0, visibility), r_a, alice_phases),
            compute_assemblage(make_state(0.0, visibility), r_a, alice_phases)};
  }

  Assemblage at(double eta) const { return mix_assemblages(unsteerable, steerable, eta); }
};

struct CriticalEfficiency {
  double eta_star = 1.0;
  double bracket_width = 0.0;
  double feasible_eta = 0.0;    // lower bracket end, LHS certificate found
  double infeasible_eta = 1.0;  // upper bracket end, steering certified
  double feasible_residual = 0.0;
  double infeasible_margin = 0.0;  // witness margin (or best residual) at the upper end
  int solves = 0;
  bool always_unsteerable = false;  // feasible even at η = 1
  bool stopped_early = false;
};

/// Largest η at which the lossy-state assemblage admits an LHS model, by
/// bisection. Infeasible probes also cut the upper end down to where their
/// steering witness stops certifying, since the assemblage is affine in η.
/// With abort_on_indeterminate = false an undecided probe ends the bisection
/// instead, keeping the last certified bracket (stopped_early is then set).
inline CriticalEfficiency critical_eta(double r_a, const std::vector<double>& alice_phases, double precision = 1e-3,
                                       const LhsOptions& opt = {}, bool abort_on_indeterminate = true,
                                       double visibility = 1.0) {
  if (!(precision >= 1e-6)) throw ValidationError("bisection precision must be >= 1e-6");
  if (alice_phases.empty()) throw ValidationError("need at least one Alice phase");
  const LhsProblem problem = LhsProblem::for_lossy_state(r_a, alice_phases, visibility);
  const LhsFeasibilitySolver solver(static_cast<int>(alice_phases.size()));

  CriticalEfficiency out;
  auto probe = [&](double eta) {
    ++out.solves;
    LhsResult r = solver.solve(problem.at(eta), opt);
    if (r.status == LhsStatus::indeterminate && abort_on_indeterminate) {
      throw IndeterminateError("feasibility undecided at eta=" + std::to_string(eta) + " after " +
                               std::to_string(r.iterations) + " iterations (best residual " +
                               std::to_string(r.residual) + "); tighten the tolerance or raise the iteration cap");
    }
    return r;
  };

  const LhsResult top = probe(1.0);
  if (top.status == LhsStatus::indeterminate) throw IndeterminateError("feasibility undecided at eta=1");
  if (top.status == LhsStatus::feasible) {
    out.eta_star = 1.0;
    out.feasible_eta = out.infeasible_eta = 1.0;
    out.feasible_residual = top.certificate->residual;
    out.always_unsteerable = true;
    return out;
  }

  double lo = 0.0;
  double hi = 1.0;
  double lo_residual = 0.0;  // the vacuum assemblage is a product assemblage
  double hi_margin = top.witness ? top.witness->margin() : top.residual;

  // A witness found at one η also certifies other η; slide the upper end down
  // to the lowest point it still certifies (checked exactly at that point).
  auto tighten = [&](const LhsResult& r) {
    if (!r.witness) return;
    const SteeringWitness& w = *r.witness;
    double bad = lo;
    double good = hi;
    for (int i = 0; i < 50 && good - bad > 1e-12; ++i) {
      const double mid = 0.5 * (bad + good);
      (w.certifies(problem.at(mid)) ? good : bad) = mid;
    }
    const Assemblage at_good = problem.at(good);
    if (good < hi && w.certifies(at_good)) {
      hi = good;
      hi_margin = w.lhs_minimum_for(at_good.sigma_r) - w.evaluate(at_good);
    }
  };
  tighten(top);

  while (hi - lo > precision) {
    const double mid = 0.5 * (lo + hi);
    const LhsResult r = probe(mid);
    if (r.status == LhsStatus::indeterminate) {
      out.stopped_early = true;
      break;
    }
    if (r.status == LhsStatus::feasible) {
      lo = mid;
      lo_residual = r.certificate->residual;
    } else {
      hi = mid;
      hi_margin = r.witness ? r.witness->margin() : r.residual;
      tighten(r);
    }
  }
  out.feasible_eta = lo;
  out.infeasible_eta = hi;
  out.eta_star = 0.5 * (lo + hi);
  out.bracket_width = hi - lo;
  out.feasible_residual = lo_residual;
  out.infeasible_margin = hi_margin;
  return out;
}

/// Phases relative to the first, reduced to [0, 2π) and sorted.
inline std::vector<double> canonical_phases(const std::vector<double>& phases) {
  std::vector<double> out;
  if (phases.empty()) return out;
  for (double p : phases) out.push_back(reduce_phase(p - phases.front()));
  std::sort(out.begin(), out.end());
  return out;
}

/// Distance between two phase sets modulo a global rotation and relabeling:
/// the smallest, over the choice of reference phase, of the largest circular
/// mismatch between sorted relative phases.
inline double phase_set_distance(const std::vector<double>& phases, const std::vector<double>& target) {
  if (phases.size() != target.size()) throw ValidationError("phase sets differ in size");
  if (phases.empty()) return 0.0;
  const std::vector<double> ref = canonical_phases(target);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < phases.size(); ++j) {
    std::vector<double> rel;
    for (double p : phases) rel.push_back(reduce_phase(p - phases[j]));
    std::sort(rel.begin(), rel.end());
    // Values just below 2π belong next to 0.
    for (std::size_t shift = 0; shift < rel.size(); ++shift) {
      double worst = 0.0;
      for (std::size_t i = 0; i < rel.size(); ++i) {
        worst = std::max(worst, circular_distance(rel[(i + shift) % rel.size()], ref[i]));
      }
      best = std::min(best, worst);
    }
  }
  return best;
}

// Objective probes stop at an undecided point rather than abort, so a lower
// iteration cap only widens the occasional bracket.
inline LhsOptions optimizer_lhs_defaults() {
  LhsOptions o;
  o.max_iterations = 20000;
  return o;
}

struct PhaseOptimizerOptions {
  double precision = 1e-5;
  NelderMeadOptions simplex{};
  LhsOptions lhs = optimizer_lhs_defaults();
  double visibility = 1.0;
  int threads = 1;
};

struct PhaseOptimizationRun {
  std::vector<double> start;
  std::vector<double> phases;
  double start_eta = 1.0;
  double eta_star = 1.0;
  int evaluations = 0;
  int failed_evaluations = 0;
  bool converged = false;
  std::vector<double> history;
};

struct PhaseOptimization {
  std::vector<double> best_phases;
  double eta_star = 1.0;
  std::vector<PhaseOptimizationRun> runs;
};

/// Minimize η* over Alice's phases with Nelder–Mead from random starts. The
/// first phase is held at 0 (η* is invariant under a global rotation), so the
/// simplex lives in the m−1 relative phases.
inline PhaseOptimization optimize_phases(double r_a, int m, int restarts, std::uint64_t seed,
                                         const PhaseOptimizerOptions& opt = {}) {
  if (restarts < 1) throw ValidationError("restarts must be >= 1");
  if (m < 1 || m > kMaxSettings) throw ValidationError("m must be in [1, 16]");
  PhaseOptimization out;
  out.runs.resize(restarts);

  parallel_for(static_cast<std::size_t>(restarts), opt.threads, [&](std::size_t k) {
    Rng rng(derive_seed(seed, k));
    std::vector<double> start(m);
    for (double& p : start) p = kTwoPi * rng.uniform();
    for (int i = m - 1; i >= 0; --i) start[i] = reduce_phase(start[i] - start[0]);

    PhaseOptimizationRun run;
    auto full = [](const std::vector<double>& rel) {
      std::vector<double> p{0.0};
      p.insert(p.end(), rel.begin(), rel.end());
      return p;
    };
    auto objective = [&](const std::vector<double>& rel) {
      try {
        return critical_eta(r_a, full(rel), opt.precision, opt.lhs, false, opt.visibility).eta_star;
      } catch (const IndeterminateError&) {
        ++run.failed_evaluations;
        return 1.0;
      }
    };
    const std::vector<double> rel0(start.begin() + 1, start.end());
    const NelderMeadResult nm = nelder_mead(objective, rel0, opt.simplex);
    run.start = start;
    run.start_eta = objective(rel0);
    run.phases = full(nm.point);
    for (double& p : run.phases) p = reduce_phase(p);
    run.eta_star = nm.value;
    run.evaluations = nm.evaluations;
    run.converged = nm.converged;
    run.history = nm.best_history;
    out.runs[k] = std::move(run);
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < out.runs.size(); ++k) {
    if (out.runs[k].eta_star < out.runs[best].eta_star) best = k;
  }
  out.best_phases = out.runs[best].phases;
  out.eta_star = out.runs[best].eta_star;
  return out;
}

}  // namespace steering_lab

#endif  // STEERING_LAB_LHS_CERTIFICATION_HPP
