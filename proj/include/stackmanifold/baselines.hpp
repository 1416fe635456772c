#pragma once

#include "stackmanifold/common.hpp"
#include "stackmanifold/games/env.hpp"
#include "stackmanifold/games/npg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace stackmanifold::baselines {

struct UcbAgent {
  std::vector<Vector> arms;
  std::vector<long> counts;
  std::vector<double> means;
  double alpha = 0.01;
  long t = 0;  // pulls so far

  UcbAgent() = default;
  UcbAgent(std::vector<Vector> grid, double alpha_ucb)
      : arms(std::move(grid)), counts(arms.size(), 0), means(arms.size(), 0.0), alpha(alpha_ucb) {
    if (arms.empty()) throw Error(ErrorKind::InvalidArgument, "UCB agent needs at least one arm");
    if (!(alpha >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha_ucb must be non-negative");
  }

  void update(std::size_t arm, double reward) {
    ++counts[arm];
    means[arm] += (reward - means[arm]) / double(counts[arm]);
    ++t;
  }
};

inline double ucb_index(double mean, long count, double alpha, long t) {
  if (count == 0) return std::numeric_limits<double>::infinity();
  return mean + alpha * std::sqrt(2.0 * std::log(double(t)) / double(count));
}

/// Unpulled arms first in index order, then the largest index; ties go to
/// the lowest arm index.
inline std::size_t ucb_select(const UcbAgent& agent, long t) {
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "UCB round index must be >= 1");
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < agent.arms.size(); ++i) {
    if (agent.counts[i] == 0) return i;
    const double v = ucb_index(agent.means[i], agent.counts[i], agent.alpha, t);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

/// `count` arms covering a box: an even grid in 1-D, otherwise a Latin
/// hypercube drawn from `seed`. Every arm is passed through `sanitize`.
template <class Sanitize>
std::vector<Vector> make_arms(const Box& box, int count, std::uint64_t seed, Sanitize&& sanitize) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "arm count must be >= 1");
  const Eigen::Index d = box.dim();
  std::vector<Vector> arms;
  if (d == 1) {
    for (int k = 0; k < count; ++k) {
      const double u = count == 1 ? 0.5 : double(k) / (count - 1);
      arms.push_back(sanitize(box.from_unit(Vector::Constant(1, u))));
    }
    return arms;
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  std::vector<std::vector<int>> strata(static_cast<std::size_t>(d), std::vector<int>(static_cast<std::size_t>(count)));
  for (auto& col : strata) {
    std::iota(col.begin(), col.end(), 0);
    std::shuffle(col.begin(), col.end(), rng);
  }
  for (int k = 0; k < count; ++k) {
    Vector u(d);
    for (Eigen::Index i = 0; i < d; ++i) u[i] = (strata[std::size_t(i)][std::size_t(k)] + jitter(rng)) / count;
    arms.push_back(sanitize(box.from_unit(u)));
  }
  return arms;
}

inline std::vector<Vector> make_leader_arms(const games::GameEnv& env, int count, std::uint64_t seed) {
  return make_arms(env.leader_box(), count, seed, [&](const Vector& a) { return env.sanitize_leader(a); });
}
inline std::vector<Vector> make_follower_arms(const games::GameEnv& env, int count, std::uint64_t seed) {
  return make_arms(env.follower_box(), count, seed, [&](const Vector& b) { return env.sanitize_follower(b); });
}

struct RewardSample {
  long t = 0;
  Vector a, b;
  double mu_a = 0.0, mu_b = 0.0;
};

/// Both players learn independently. With a conditioned follower, a
/// separate follower agent is kept per leader arm.
struct DualUcb {
  UcbAgent leader;
  UcbAgent follower;
  bool conditioned = false;
  std::map<std::size_t, UcbAgent> follower_by_leader_arm;
  long t = 0;

  DualUcb(const games::GameEnv& env, int arms, double alpha, std::uint64_t seed, bool conditioned_follower = false)
      : leader(make_leader_arms(env, arms, seed), alpha),
        follower(make_follower_arms(env, arms, seed ^ 0x9e3779b97f4a7c15ULL), alpha),
        conditioned(conditioned_follower) {}
};

inline RewardSample dual_ucb_round(DualUcb& s, const games::GameEnv& env, Rng& rng) {
  const long t = s.t + 1;
  const std::size_t ia = ucb_select(s.leader, t);
  UcbAgent* fol = &s.follower;
  if (s.conditioned) {
    auto it = s.follower_by_leader_arm.find(ia);
    if (it == s.follower_by_leader_arm.end()) it = s.follower_by_leader_arm.emplace(ia, s.follower).first;
    fol = &it->second;
  }
  const std::size_t ib = ucb_select(*fol, std::max<long>(1, fol->t + 1));
  RewardSample r;
  r.t = t;
  r.a = s.leader.arms[ia];
  r.b = fol->arms[ib];
  const games::Rewards rw = env.sample_rewards(r.a, r.b, rng);
  r.mu_a = rw.leader;
  r.mu_b = rw.follower;
  s.leader.update(ia, rw.leader);
  fol->update(ib, rw.follower);
  s.t = t;
  return r;
}

// ---------------------------------------------------------------------------
// Newsvendor pricing baseline.

struct NpgBaselineConfig {
  double kappa = 1.0;
  int leader_grid = 401;
  double eps_rho1 = 1e-6;
  double q_lo = 0.01, q_hi = 0.99;  // quantile argument clamp
};

struct NpgBaselineState {
  NpgBaselineConfig cfg;
  std::vector<double> prices, demands;
  double rho0_hat = 0.0, rho1_hat = 0.0;
  double w0 = 0.0, w1 = 0.0;  // marginal confidence half-widths
  double sigma_hat = 0.0;
  double beta = 0.0;               // kappa sqrt(2 log t)
  double price_mean = 0.0, sxx = 0.0;
  long t = 0;
};

struct NpgBaselineRound {
  RewardSample sample;
  double demand = 0.0;
  bool exploration = false;
  double H = 0.0;
};

/// Least-squares fit of demand = rho0 - rho1 p. Returns false when the
/// design is degenerate (fewer than two distinct prices).
inline bool npg_fit(NpgBaselineState& s) {
  const std::size_t n = s.prices.size();
  if (n < 2) return false;
  const double pm = std::accumulate(s.prices.begin(), s.prices.end(), 0.0) / double(n);
  const double dm = std::accumulate(s.demands.begin(), s.demands.end(), 0.0) / double(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (s.prices[i] - pm) * (s.prices[i] - pm);
    sxy += (s.prices[i] - pm) * (s.demands[i] - dm);
  }
  if (!(sxx > 1e-12 * std::max(1.0, pm * pm) * double(n))) return false;
  const double slope = sxy / sxx;
  s.rho1_hat = -slope;
  s.rho0_hat = dm - slope * pm;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = s.demands[i] - (s.rho0_hat - s.rho1_hat * s.prices[i]);
    rss += e * e;
  }
  s.sigma_hat = n > 2 ? std::sqrt(rss / double(n - 2)) : 0.0;
  s.beta = s.cfg.kappa * std::sqrt(2.0 * std::log(std::max<double>(double(s.t), 2.0)));
  s.price_mean = pm;
  s.sxx = sxx;
  s.w1 = s.beta * s.sigma_hat / std::sqrt(sxx);
  s.w0 = s.beta * s.sigma_hat * std::sqrt(1.0 / double(n) + pm * pm / sxx);
  return true;
}

/// Largest mean demand at `price` over the confidence ellipsoid of (rho0, rho1).
inline double npg_optimistic_demand(const NpgBaselineState& s, double price) {
  const double n = double(s.prices.size());
  const double dp = price - s.price_mean;
  const double width = s.beta * s.sigma_hat * std::sqrt(1.0 / n + dp * dp / s.sxx);
  return std::max(0.0, s.rho0_hat - s.rho1_hat * price + width);
}

/// Retail price set against wholesale price a when demand vanishes at H.
inline double npg_risk_free_price(double H, double a) { return 0.5 * (H + a); }

/// Demand quantile at price p under demand parameters (r0, r1) and noise sd.
inline double npg_quantile(double r0, double r1, double sd, double price, double q) {
  static const boost::math::normal std_normal;
  return std::max(0.0, r0 - r1 * price) + sd * boost::math::quantile(std_normal, q);
}

inline NpgBaselineRound npg_baseline_round(NpgBaselineState& s, const games::NpgGame& env, Rng& rng) {
  const games::NpgParams& p = env.params();
  NpgBaselineRound out;
  s.t += 1;
  out.sample.t = s.t;
  double a = 0.0, price = 0.0, b = 0.0;
  const bool fitted = npg_fit(s);
  if (!fitted) {
    // Exploration: spread prices until the regression is identifiable.
    out.exploration = true;
    const double frac = (s.t % 2 == 1) ? 0.25 : 0.75;
    a = p.a_lo + frac * (p.a_hi - p.a_lo);
    out.H = p.p_hi;
    price = std::clamp(npg_risk_free_price(out.H, a), p.p_lo, p.p_hi);
    b = 0.5 * (p.b_lo + p.b_hi);
  } else {
    const double sd = std::max(s.sigma_hat, 1e-9);
    // H uses the point estimate; optimism enters only through the demand
    // quantile.
    out.H = s.rho0_hat / std::max(s.rho1_hat, s.cfg.eps_rho1);
    auto optimistic_order = [&](double ai, double pr) {
      const double q = std::clamp(1.0 - 2.0 * ai / (out.H + ai), s.cfg.q_lo, s.cfg.q_hi);
      return std::clamp(npg_quantile(npg_optimistic_demand(s, pr), 0.0, sd, pr, q), p.b_lo, p.b_hi);
    };
    double best_v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < s.cfg.leader_grid; ++i) {
      const double ai = p.a_lo + (p.a_hi - p.a_lo) * i / (s.cfg.leader_grid - 1);
      if (!(out.H + ai > 0.0)) continue;
      const double pr = std::clamp(npg_risk_free_price(out.H, ai), p.p_lo, p.p_hi);
      const double v = pr > ai ? ai * optimistic_order(ai, pr) : 0.0;
      if (v > best_v) {
        best_v = v;
        a = ai;
      }
    }
    price = std::clamp(npg_risk_free_price(out.H, a), p.p_lo, p.p_hi);
    b = price > a ? optimistic_order(a, price) : p.b_lo;
  }
  out.demand = games::npg_draw_demand(p, price, rng);
  out.sample.a = Vector::Constant(1, a);
  out.sample.b = (Vector(2) << b, price).finished();
  out.sample.mu_a = a * b;
  out.sample.mu_b = price * std::min(out.demand, b) - a * b;
  s.prices.push_back(price);
  s.demands.push_back(out.demand);
  return out;
}

}  // namespace stackmanifold::baselines
