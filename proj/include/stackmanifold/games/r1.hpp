#pragma once

#include "stackmanifold/games/env.hpp"
#include "stackmanifold/optim.hpp"

#include <cmath>
#include <random>

namespace stackmanifold::games {

struct R1GameParams {
  double theta1 = 4.0, theta2 = 1.0, theta3 = 0.9;
  double alpha1 = 1.0, alpha2 = 2.0;
  double sigma = 6.0;
  double a_lo = 0.0, a_hi = 10.0;
  double b_lo = 0.0, b_hi = 10.0;

  void validate() const {
    if (!(alpha1 > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha1 must be positive");
    if (!(theta3 > 0.0)) throw Error(ErrorKind::InvalidArgument, "theta3 must be positive");
    if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be non-negative");
    if (!(a_lo < a_hi) || !(b_lo < b_hi)) throw Error(ErrorKind::InvalidArgument, "empty action box");
  }
};

struct R1Response {
  double b = 0.0;
  bool clamped = false;
};

/// b = alpha2 a / (2 alpha1), clamped to the follower box.
inline R1Response r1_follower_br(const R1GameParams& p, double a) {
  const double raw = p.alpha2 * a / (2.0 * p.alpha1);
  const double b = std::clamp(raw, p.b_lo, p.b_hi);
  return {b, b != raw};
}

inline Rewards r1_mean(const R1GameParams& p, double a, double b) {
  return {p.theta1 * a + p.theta2 * std::log1p(b * b) - 0.5 * p.theta3 * a * a, -p.alpha1 * b * b + p.alpha2 * a * b};
}

inline Rewards r1_rewards(const R1GameParams& p, double a, double b, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Rewards m = r1_mean(p, a, b);
  m.leader += p.sigma * n(rng);
  m.follower += p.sigma * n(rng);
  return m;
}

/// d/da of the leader objective with the follower best-responding (interior branch).
inline double r1_foc(const R1GameParams& p, double a) {
  const double k = p.alpha2 / (2.0 * p.alpha1);
  const double b = k * a;
  return p.theta1 - p.theta3 * a + p.theta2 * 2.0 * b * k / (1.0 + b * b);
}

inline EquilibriumCertificate r1_equilibrium(const R1GameParams& p, int resolution) {
  p.validate();
  if (resolution < 1000) throw Error(ErrorKind::InvalidArgument, "resolution must be >= 1000");
  auto f = [&](double a) { return r1_mean(p, a, r1_follower_br(p, a).b).leader; };
  const optim::ScalarResult r = optim::grid_golden_max(f, p.a_lo, p.a_hi, resolution, 1e-9);
  EquilibriumCertificate c;
  c.a_star = Vector::Constant(1, r.x);
  c.b_star = Vector::Constant(1, r1_follower_br(p, r.x).b);
  c.value = r1_mean(p, r.x, c.b_star[0]).leader;
  c.method = "grid+golden-section";
  c.resolution = resolution;
  c.foc_residual = std::abs(r1_foc(p, r.x));
  c.inner_residual = 0.0;  // closed-form follower
  return c;
}

class R1Game : public GameEnv {
 public:
  explicit R1Game(R1GameParams p) : p_(p) { p_.validate(); }

  const R1GameParams& params() const { return p_; }
  std::string name() const override { return "r1"; }
  Box leader_box() const override { return Box::uniform(1, p_.a_lo, p_.a_hi); }
  Box follower_box() const override { return Box::uniform(1, p_.b_lo, p_.b_hi); }
  Vector follower_best_response(const Vector& a) const override {
    return Vector::Constant(1, r1_follower_br(p_, a[0]).b);
  }
  Rewards mean_rewards(const Vector& a, const Vector& b) const override { return r1_mean(p_, a[0], b[0]); }
  Rewards sample_rewards(const Vector& a, const Vector& b, Rng& rng) const override {
    return r1_rewards(p_, a[0], b[0], rng);
  }
  EquilibriumCertificate equilibrium(int resolution) const override { return r1_equilibrium(p_, resolution); }
  double noise_scale() const override { return p_.sigma; }

 private:
  R1GameParams p_;
};

}  // namespace stackmanifold::games
