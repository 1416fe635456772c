#pragma once

#include "stackmanifold/common.hpp"
#include "stackmanifold/geometry.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace stackmanifold::bandit {

/// Ridge-regression sufficient statistics. gram = lambda I + sum phi phi^T.
struct EstimatorState {
  Matrix gram;
  Vector moment;
  double lambda = 1.0;
  long count = 0;

  EstimatorState() = default;
  EstimatorState(Eigen::Index D, double lambda_reg)
      : gram(lambda_reg * Matrix::Identity(D, D)), moment(Vector::Zero(D)), lambda(lambda_reg) {
    if (D < 1) throw Error(ErrorKind::InvalidArgument, "estimator dimension must be >= 1");
    if (!(lambda_reg > 0.0)) throw Error(ErrorKind::InvalidArgument, "ridge regulariser must be positive");
  }

  Eigen::Index dim() const { return moment.size(); }

  void add(const Vector& phi, double mu) {
    if (phi.size() != dim()) throw Error(ErrorKind::InvalidArgument, "feature dimension mismatch");
    if (!phi.allFinite() || !std::isfinite(mu)) throw Error(ErrorKind::InvalidArgument, "non-finite observation");
    gram.noalias() += phi * phi.transpose();  // phi_i phi_j == phi_j phi_i, so symmetry is exact
    moment += mu * phi;
    ++count;
  }
};

inline EstimatorState update(EstimatorState state, const Vector& phi, double mu) {
  state.add(phi, mu);
  return state;
}

inline constexpr double kIllConditioned = 1e12;

/// theta = gram^{-1} moment via Cholesky. `condition` (optional) receives the
/// spectral condition number; values above kIllConditioned are only reported.
inline Vector solve_theta(const EstimatorState& s, double* condition = nullptr) {
  const Eigen::LLT<Matrix> llt(s.gram);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::DegenerateInput, "gram matrix is not positive definite");
  if (condition) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(s.gram, Eigen::EigenvaluesOnly);
    *condition = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  }
  return llt.solve(s.moment);
}

inline double min_eigenvalue(const EstimatorState& s) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(s.gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

enum class ScheduleKind { InverseSqrt, Ofu };

struct ConfidenceSchedule {
  ScheduleKind kind = ScheduleKind::Ofu;
  double c0 = 1.0;
  double delta = 0.05;
  double floor = 1e-3;
  double cap = 1.9;  // chord length; kept below 2 so the geodesic ball stays proper

  void validate() const {
    if (!(c0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "schedule c0 must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "schedule delta must lie in (0,1)");
    if (!(floor > 0.0 && floor <= cap && cap <= 2.0))
      throw Error(ErrorKind::InvalidArgument, "schedule needs 0 < floor <= cap <= 2");
  }
};

inline double radius_unclamped(const ConfidenceSchedule& s, long t, const EstimatorState* state) {
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "round index must be >= 1");
  if (s.kind == ScheduleKind::InverseSqrt) return s.c0 / std::sqrt(double(t));
  if (!state) throw Error(ErrorKind::InvalidArgument, "ofu schedule needs the estimator state");
  const double D = double(state->dim());
  return s.c0 * std::sqrt(D * std::log((1.0 + double(t)) / s.delta)) / std::sqrt(min_eigenvalue(*state));
}

/// Cartesian confidence radius J(t), clamped to [floor, cap].
inline double radius(const ConfidenceSchedule& s, long t, const EstimatorState* state = nullptr) {
  return std::clamp(radius_unclamped(s, t, state), s.floor, s.cap);
}

/// Gap <theta, xi*> - <theta, xi_played> on a synthetic linear sphere game.
inline double simple_regret_linear(const Vector& theta, const Vector& optimum_point, const Vector& played_point) {
  return theta.dot(optimum_point) - theta.dot(played_point);
}

/// Theorem-style bound |theta| (1 - cos(2 arccos(1 - J^2/2))).
inline double simple_regret_bound(double theta_norm, double J) {
  const double rho = geometry::cartesian_radius_to_geodesic(J);
  return theta_norm * (1.0 - std::cos(std::min(2.0 * rho, kPi)));
}

struct RegretLedger {
  std::vector<double> instantaneous;
  std::vector<double> cumulative;
  std::vector<double> bound;  // per-round bound trace, empty entries as NaN

  void append(double inst, double bound_value = std::numeric_limits<double>::quiet_NaN()) {
    instantaneous.push_back(inst);
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + inst);
    bound.push_back(bound_value);
  }
  std::size_t rounds() const { return instantaneous.size(); }
};

/// Appends oracle_value - expected_reward for the played round.
inline RegretLedger& stackelberg_regret(RegretLedger& ledger, double oracle_value, double expected_reward) {
  ledger.append(oracle_value - expected_reward);
  return ledger;
}

}  // namespace stackmanifold::bandit
