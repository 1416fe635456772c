#pragma once

#include "stackmanifold/games/env.hpp"
#include "stackmanifold/games/separable.hpp"
#include "stackmanifold/optim.hpp"

#include <cmath>
#include <random>

namespace stackmanifold::games {

struct SsgParams {
  Vector theta_a = (Vector(5) << -0.850, -0.049, 0.620, -0.535, -0.313).finished();
  Vector theta_b = (Vector(5) << -1.554, -0.176, 0.576, 0.803, 0.358).finished();
  double C_a = 1.0, C_b = 1.0;
  double sigma = 0.1;
  double lo = -2.0, hi = 2.0;  // symmetric box applied to every coordinate

  Eigen::Index n() const { return theta_a.size(); }

  void validate() const {
    if (theta_a.size() < 1 || theta_b.size() != theta_a.size())
      throw Error(ErrorKind::InvalidArgument, "theta vectors must share a positive dimension");
    if (!(C_a > 0.0) || !(C_b > 0.0)) throw Error(ErrorKind::InvalidArgument, "budgets must be positive");
    if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be non-negative");
    if (!(lo <= 0.0 && hi >= 0.0 && lo < hi)) throw Error(ErrorKind::InvalidArgument, "box must contain 0");
  }
  Box box() const { return Box::uniform(n(), lo, hi); }
};

inline Rewards ssg_mean(const SsgParams& p, const Vector& a, const Vector& b) {
  const Vector d = a - b;
  return {p.theta_a.dot(d) - p.theta_a.dot(a.cwiseProduct(a)), p.theta_b.dot(d) - p.theta_b.dot(b.cwiseProduct(b))};
}

inline Rewards ssg_rewards(const SsgParams& p, const Vector& a, const Vector& b, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Rewards m = ssg_mean(p, a, b);
  m.leader += p.sigma * n(rng);
  m.follower += p.sigma * n(rng);
  return m;
}

inline SeparableQuadratic ssg_follower_problem(const SsgParams& p) {
  return {-p.theta_b, -p.theta_b, p.theta_b, p.C_b, p.box()};
}

/// Leader problem given a fixed follower action (the a-b coupling is linear).
inline SeparableQuadratic ssg_leader_problem(const SsgParams& p) {
  return {p.theta_a, -p.theta_a, p.theta_a, p.C_a, p.box()};
}

struct SsgResponse {
  Vector b;
  double kkt_residual = 0.0;  // value gap to the best single-coordinate budget move
};

/// The follower's objective does not depend on a, so its best response is a
/// fixed vector. Zero weights are resolved to b_i = 0.
inline SsgResponse ssg_follower_br(const SsgParams& p, int levels = 2000) {
  p.validate();
  if (p.theta_b.cwiseAbs().maxCoeff() == 0.0)
    throw Error(ErrorKind::IndifferentFollower, "all follower weights are zero");
  const SeparableQuadratic q = ssg_follower_problem(p);
  const SeparableSolution s = solve_separable(q, levels);
  SsgResponse r{s.x, 0.0};
  // Residual: best improvement from re-optimising one coordinate with the slack it could claim.
  const double used = weighted_l1(s.x, q.w);
  for (Eigen::Index i = 0; i < q.lin.size(); ++i) {
    const double own = std::abs(q.w[i] * s.x[i]);
    const double alt = q.coord_best(i, own + std::max(0.0, q.C - used));
    r.kkt_residual = std::max(r.kkt_residual, alt - q.coord_value(i, s.x[i]));
  }
  return r;
}

inline Vector ssg_project(const Vector& x, const Vector& w, double C, const Box& box, bool* adjusted) {
  Vector y = project_weighted_l1(box.clamp(x), w, C);
  if (adjusted) *adjusted = (y - x).cwiseAbs().maxCoeff() > 0.0;
  return y;
}

inline EquilibriumCertificate ssg_equilibrium(const SsgParams& p, int resolution, std::uint64_t seed = 0) {
  p.validate();
  if (resolution < 10) throw Error(ErrorKind::InvalidArgument, "resolution must be >= 10");
  const Vector b_star = ssg_follower_br(p, resolution).b;
  const SeparableSolution exact = solve_separable(ssg_leader_problem(p), resolution);
  const Box box = p.box();
  auto lead = [&](const Vector& a) {
    return ssg_mean(p, ssg_project(a, p.theta_a, p.C_a, box, nullptr), b_star).leader;
  };

  // Multi-start Nelder-Mead on the projected objective as a cross-check.
  Rng rng(seed);
  std::uniform_real_distribution<double> u(p.lo, p.hi);
  std::vector<double> finals;
  Vector best_a = exact.x;
  double best_v = lead(exact.x);
  optim::NelderMeadOptions opt;
  opt.initial_step = 0.05;
  opt.max_evaluations = 4000;
  for (int s = 0; s < 16; ++s) {
    Vector x0(p.n());
    for (Eigen::Index i = 0; i < p.n(); ++i) x0[i] = u(rng);
    const auto r = optim::nelder_mead_max(lead, ssg_project(x0, p.theta_a, p.C_a, box, nullptr), box, opt);
    finals.push_back(r.value);
    if (r.value > best_v + 1e-12) {
      best_v = r.value;
      best_a = ssg_project(r.x, p.theta_a, p.C_a, box, nullptr);
    }
  }
  const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / double(finals.size());
  double var = 0.0;
  for (double f : finals) var += (f - mean) * (f - mean);

  EquilibriumCertificate c;
  c.a_star = best_a;
  c.b_star = b_star;
  c.value = ssg_mean(p, best_a, b_star).leader;
  c.method = "separable budget DP + golden polish; 16-start nelder-mead cross-check";
  c.resolution = resolution;
  c.start_dispersion = std::sqrt(var / double(finals.size()));
  c.inner_residual = ssg_follower_br(p, resolution).kkt_residual;
  c.constraint_activity = {weighted_l1(best_a, p.theta_a) >= p.C_a * (1 - 1e-9) ? 1 : 0,
                           weighted_l1(b_star, p.theta_b) >= p.C_b * (1 - 1e-9) ? 1 : 0};
  return c;
}

class SsgGame : public GameEnv {
 public:
  explicit SsgGame(SsgParams p, int levels = 2000) : p_(std::move(p)) {
    p_.validate();
    b_star_ = ssg_follower_br(p_, levels).b;
  }

  const SsgParams& params() const { return p_; }
  std::string name() const override { return "ssg"; }
  Box leader_box() const override { return p_.box(); }
  Box follower_box() const override { return p_.box(); }
  Vector sanitize_leader(const Vector& a, bool* adjusted) const override {
    return ssg_project(a, p_.theta_a, p_.C_a, p_.box(), adjusted);
  }
  Vector sanitize_follower(const Vector& b, bool* adjusted) const override {
    return ssg_project(b, p_.theta_b, p_.C_b, p_.box(), adjusted);
  }
  Vector follower_best_response(const Vector&) const override { return b_star_; }
  Rewards mean_rewards(const Vector& a, const Vector& b) const override { return ssg_mean(p_, a, b); }
  Rewards sample_rewards(const Vector& a, const Vector& b, Rng& rng) const override {
    return ssg_rewards(p_, a, b, rng);
  }
  EquilibriumCertificate equilibrium(int resolution) const override { return ssg_equilibrium(p_, resolution); }
  double noise_scale() const override { return p_.sigma; }

 private:
  SsgParams p_;
  Vector b_star_;
};

}  // namespace stackmanifold::games
