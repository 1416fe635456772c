#pragma once

#include "stackmanifold/bandit.hpp"
#include "stackmanifold/flow/map.hpp"
#include "stackmanifold/games/env.hpp"
#include "stackmanifold/geometry.hpp"
#include "stackmanifold/optim.hpp"

#include <algorithm>
#include <numeric>

#include <random>
#include <vector>

namespace stackmanifold::gisa {

enum class Phase { Warmup, Phase1, Phase2 };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Warmup: return "warmup";
    case Phase::Phase1: return "phase1";
    case Phase::Phase2: return "phase2";
  }
  return "?";
}

struct FollowerSearch {
  int grid = 32;     // coarse points per follower dimension
  int starts = 4;    // best coarse points refined by coordinate descent
  int sweeps = 50;   // coordinate-descent sweeps per start
  double tol = 1e-6; // action-space tolerance
  int max_coarse = 4096;  // above this the product grid is replaced by a Latin hypercube
};

/// How a manifold target is mapped back to a leader action.
enum class Pullback {
  HeadInverse,     // invert head A on the target's block, clamping into the squash image
  NearestOnImage,  // leader action whose head-A block lies geodesically closest to the target
};

struct GisaConfig {
  bandit::ConfidenceSchedule schedule;
  Pullback pullback = Pullback::HeadInverse;
  int pullback_grid = 64;  // coarse points per leader dimension for NearestOnImage
  double lambda_reg = 1.0;
  bool predict_follower = false;  // run the isoplane search each round (planning only)
  bool freeze_estimates = false;  // keep injected estimates fixed
  FollowerSearch search;
};

struct GisaState {
  const flow::FlowModel* model = nullptr;
  GisaConfig cfg;
  bandit::EstimatorState est_a, est_b;
  Vector theta_a, theta_b;
  long t = 0;  // rounds completed

  GisaState(const flow::FlowModel& m, GisaConfig c)
      : model(&m),
        cfg(c),
        est_a(m.D(), c.lambda_reg),
        est_b(m.D(), c.lambda_reg),
        theta_a(Vector::Zero(m.D())),
        theta_b(Vector::Zero(m.D())) {
    cfg.schedule.validate();
  }
};

/// Geodesic confidence radius for the upcoming round.
inline double geodesic_radius(const GisaState& s) {
  const double J = bandit::radius(s.cfg.schedule, s.t + 1, &s.est_a);
  return geometry::cartesian_radius_to_geodesic(J);
}

inline Phase choose_phase(double separation, double rho) { return separation < 2.0 * rho ? Phase::Phase1 : Phase::Phase2; }

inline Phase choose_phase(const GisaState& s, double rho) {
  if (!(s.theta_a.norm() > 0.0) || !(s.theta_b.norm() > 0.0)) return Phase::Phase1;
  return choose_phase(geometry::geodesic_distance(s.theta_a, s.theta_b), rho);
}

template <class Gen>
Vector phase1_action(const Vector& center, double rho, Gen& rng) {
  return geometry::sample_ball_boundary(geometry::GeodesicBall{center, rho}, rng);
}

/// Point of the ball around xi_a closest to xi_b: slerp from xi_a toward xi_b by rho.
inline Vector phase2_action(const Vector& xi_a, const Vector& xi_b, double rho) {
  if (rho == 0.0) return xi_a;
  return geometry::geodesic_step(xi_a, xi_b, rho);
}

struct LeaderFromTarget {
  Vector a_unit;        // leader action in the flow's unit box (clamped into it)
  bool angle_clamped = false;
  bool action_clamped = false;
};

/// Pulls a manifold target back to a leader action through head A.
inline LeaderFromTarget leader_action_from_target(const flow::FlowModel& m, const Vector& target) {
  const geometry::AngularCoords c = geometry::cartesian_to_spherical(target);
  const flow::HeadInverse h = flow::invert_head(m, 0, flow::head_block(m, 0, c.angles), true);
  LeaderFromTarget r;
  r.angle_clamped = h.clamped;
  r.a_unit = h.action.cwiseMax(0.0).cwiseMin(1.0);
  r.action_clamped = (r.a_unit - h.action).cwiseAbs().maxCoeff() > 0.0 || !h.action.allFinite();
  if (!h.action.allFinite()) r.a_unit = Vector::Constant(h.action.size(), 0.5);
  return r;
}

/// Geodesic distance from target to the point that keeps the target's head-B
/// angles and takes head A's angles from leader action a_unit.
inline double head_a_distance(const flow::FlowModel& m, const Vector& a_unit, const geometry::AngularCoords& target) {
  const Vector b_mid = Vector::Constant(m.dim_b(), 0.5);
  const Vector angles = flow::forward(m, a_unit, b_mid).angles;
  geometry::AngularCoords c = target;
  for (int k = 0; k < m.head(0).n_angles; ++k) {
    const int g = flow::angle_index(m.D(), 0, k);
    c.angles[g] = angles[g];
  }
  return geometry::geodesic_distance(geometry::spherical_to_cartesian(c), geometry::spherical_to_cartesian(target));
}

/// Nearest point of head A's image. Equals the head inverse whenever the
/// target's block is reachable; otherwise the unit-box action minimising
/// head_a_distance (coarse scan, then coordinate-wise golden section).
inline LeaderFromTarget leader_action_nearest(const flow::FlowModel& m, const Vector& target, int grid) {
  const geometry::AngularCoords c = geometry::cartesian_to_spherical(target);
  LeaderFromTarget r = leader_action_from_target(m, target);
  if (r.a_unit.allFinite() && head_a_distance(m, r.a_unit, c) < 1e-9) return r;
  const int na = m.dim_a();
  auto dist = [&](const Vector& a) { return head_a_distance(m, a, c); };
  Vector best = r.a_unit;
  double best_d = dist(best);
  // Coarse scan: product grid for one or two dimensions, coordinate lines otherwise.
  const int g = std::max(2, grid);
  if (na <= 2) {
    const int total = na == 1 ? g : g * g;
    for (int k = 0; k < total; ++k) {
      Vector a(na);
      a[0] = double(k % g) / (g - 1);
      if (na == 2) a[1] = double(k / g) / (g - 1);
      const double d = dist(a);
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
  }
  const double cell = 1.0 / (g - 1);
  for (int sweep = 0; sweep < 20; ++sweep) {
    const Vector before = best;
    for (int i = 0; i < na; ++i) {
      const double lo = na <= 2 ? std::max(0.0, best[i] - cell) : 0.0;
      const double hi = na <= 2 ? std::min(1.0, best[i] + cell) : 1.0;
      auto f = [&](double x) {
        Vector a = best;
        a[i] = x;
        return -dist(a);
      };
      const auto s = optim::golden_section_max(f, lo, hi, 1e-9);
      if (-s.value < best_d) {
        best[i] = s.x;
        best_d = -s.value;
      }
    }
    if ((best - before).cwiseAbs().maxCoeff() < 1e-9) break;
  }
  r.a_unit = best;
  r.action_clamped = false;
  return r;
}

/// Minimises the geodesic distance between forward(a, b) and target over
/// b in the unit box: coarse scan, then coordinate descent from the best
/// few scan points.
inline Vector follower_best_response(const flow::FlowModel& m, const Vector& a_unit, const Vector& target,
                                     const FollowerSearch& cfg) {
  const int nb = m.dim_b();
  auto dist = [&](const Vector& b) {
    return geometry::geodesic_distance(flow::forward(m, a_unit, b).point, target);
  };
  // Coarse candidates.
  std::vector<Vector> cand;
  double total = 1.0;
  for (int i = 0; i < nb; ++i) total *= cfg.grid;
  if (total <= cfg.max_coarse) {
    std::vector<int> idx(std::size_t(nb), 0);
    for (long c = 0; c < long(total); ++c) {
      Vector b(nb);
      for (int i = 0; i < nb; ++i) b[i] = double(idx[std::size_t(i)]) / (cfg.grid - 1);
      cand.push_back(b);
      for (int i = 0; i < nb && ++idx[std::size_t(i)] == cfg.grid; ++i) idx[std::size_t(i)] = 0;
    }
  } else {
    // Latin hypercube with a fixed seed so the search stays deterministic.
    const int n = cfg.max_coarse;
    Rng lhs(0x1a7e5u);
    std::vector<std::vector<int>> strata(static_cast<std::size_t>(nb), std::vector<int>(static_cast<std::size_t>(n)));
    for (auto& col : strata) {
      std::iota(col.begin(), col.end(), 0);
      std::shuffle(col.begin(), col.end(), lhs);
    }
    for (int k = 0; k < n; ++k) {
      Vector b(nb);
      for (int i = 0; i < nb; ++i) b[i] = (strata[std::size_t(i)][std::size_t(k)] + 0.5) / n;
      cand.push_back(b);
    }
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(cand.size());
  if (!cand.empty()) {
    Matrix X(m.dim_a() + nb, Eigen::Index(cand.size()));
    for (std::size_t c = 0; c < cand.size(); ++c) X.col(Eigen::Index(c)) << a_unit, cand[c];
    const flow::BatchForward f = flow::forward_batch(m, X, false);
    const Vector cosines = (target.transpose() * f.y).transpose();
    for (std::size_t c = 0; c < cand.size(); ++c)
      scored.emplace_back(std::acos(std::clamp(cosines[Eigen::Index(c)], -1.0, 1.0)), c);
  }
  const std::size_t starts = std::min<std::size_t>(std::size_t(std::max(1, cfg.starts)), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + long(starts), scored.end());

  Vector best = cand[scored[0].second];
  double best_d = scored[0].first;
  const double cell = 1.0 / (cfg.grid - 1);
  for (std::size_t s = 0; s < starts; ++s) {
    Vector b = cand[scored[s].second];
    double d = scored[s].first;
    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
      const Vector before = b;
      for (int i = 0; i < nb; ++i) {
        const double lo = std::max(0.0, b[i] - cell), hi = std::min(1.0, b[i] + cell);
        auto f = [&](double x) {
          Vector bb = b;
          bb[i] = x;
          return -dist(bb);
        };
        const auto r = optim::golden_section_max(f, lo, hi, cfg.tol * 0.1);
        if (-r.value < d) {
          b[i] = r.x;
          d = -r.value;
        }
      }
      if ((b - before).cwiseAbs().maxCoeff() < cfg.tol) break;
    }
    if (d < best_d) {
      best_d = d;
      best = b;
    }
  }
  return best;
}

struct RoundLog {
  long t = 0;
  Phase phase = Phase::Warmup;
  double J = 0.0;
  double rho = 0.0;
  double separation = 0.0;  // geodesic between the two estimates
  bool angle_clamped = false;
  bool action_clamped = false;
  bool phase2_fallback = false;
  Vector target;
  Vector predicted_b;  // empty unless predict_follower
  Vector a, b;
  Vector phi;
  double mu_a = 0.0, mu_b = 0.0;
};

/// Maps between a game's action boxes and the flow's unit cube.
struct ActionScaler {
  Box leader, follower;

  Vector leader_to_unit(const Vector& a) const { return leader.to_unit(a).cwiseMax(0.0).cwiseMin(1.0); }
  Vector follower_to_unit(const Vector& b) const { return follower.to_unit(b).cwiseMax(0.0).cwiseMin(1.0); }
};

/// One round: phase, manifold target, leader action, native follower
/// response, observation and estimator update.
template <class Gen>
RoundLog run_round(GisaState& s, const games::GameEnv& env, Gen& rng) {
  const flow::FlowModel& m = *s.model;
  const ActionScaler scale{env.leader_box(), env.follower_box()};
  RoundLog log;
  log.t = s.t + 1;
  log.J = bandit::radius(s.cfg.schedule, log.t, &s.est_a);
  log.rho = geometry::cartesian_radius_to_geodesic(log.J);
  Vector a;
  if (s.t == 0 && !s.cfg.freeze_estimates) {
    log.phase = Phase::Warmup;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector au(m.dim_a());
    for (Eigen::Index i = 0; i < au.size(); ++i) au[i] = u(rng);
    a = scale.leader.from_unit(au);
  } else {
    const bool have_a = s.theta_a.norm() > 0.0;
    const bool have_b = s.theta_b.norm() > 0.0;
    const Vector xi_a = have_a ? geometry::project_to_sphere(s.theta_a) : geometry::sample_sphere(m.D(), rng);
    log.separation = (have_a && have_b) ? geometry::geodesic_distance(s.theta_a, s.theta_b) : 0.0;
    log.phase = (have_a && have_b) ? choose_phase(log.separation, log.rho) : Phase::Phase1;
    if (log.phase == Phase::Phase2) {
      try {
        log.target = phase2_action(xi_a, geometry::project_to_sphere(s.theta_b), log.rho);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateDirection) throw;
        log.phase2_fallback = true;
        log.phase = Phase::Phase1;
      }
    }
    if (log.phase == Phase::Phase1) log.target = phase1_action(xi_a, log.rho, rng);
    const LeaderFromTarget lt = s.cfg.pullback == Pullback::NearestOnImage
                                    ? leader_action_nearest(m, log.target, s.cfg.pullback_grid)
                                    : leader_action_from_target(m, log.target);
    log.angle_clamped = lt.angle_clamped;
    log.action_clamped = lt.action_clamped;
    if (s.cfg.predict_follower && have_b)
      log.predicted_b = follower_best_response(m, lt.a_unit, geometry::project_to_sphere(s.theta_b), s.cfg.search);
    a = scale.leader.from_unit(lt.a_unit);
  }
  bool adjusted = false;
  log.a = env.sanitize_leader(a, &adjusted);
  log.action_clamped = log.action_clamped || adjusted;
  log.b = env.sanitize_follower(env.follower_best_response(log.a));
  const games::Rewards r = env.sample_rewards(log.a, log.b, rng);
  log.mu_a = r.leader;
  log.mu_b = r.follower;
  log.phi = flow::forward(m, scale.leader_to_unit(log.a), scale.follower_to_unit(log.b)).point;
  if (!s.cfg.freeze_estimates) {
    s.est_a.add(log.phi, r.leader);
    s.est_b.add(log.phi, r.follower);
    s.theta_a = bandit::solve_theta(s.est_a);
    s.theta_b = bandit::solve_theta(s.est_b);
  }
  s.t += 1;
  return log;
}

}  // namespace stackmanifold::gisa
