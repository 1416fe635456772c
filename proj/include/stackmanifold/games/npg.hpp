#pragma once

#include "stackmanifold/games/env.hpp"
#include "stackmanifold/optim.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <random>

namespace stackmanifold::games {

/// Follower action layout: [order quantity b, retail price p].
struct NpgParams {
  double rho0 = 1.0;
  double rho1 = 0.1;  // slope magnitude: expected demand max(0, rho0 - rho1 p)
  double sigma = 0.1;
  double a_lo = 0.0, a_hi = 10.0;
  double p_lo = 0.0, p_hi = 10.0;
  double b_lo = 0.0, b_hi = 1.0;
  double kappa = 1.0;  // baseline confidence scaling
  int br_grid = 21;    // follower best-response grid per dimension

  /// Boxes: prices in [0, rho0/rho1], order quantity in [0, rho0].
  static NpgParams with_default_boxes(double rho0, double rho1, double sigma) {
    if (!(rho1 > 0.0)) throw Error(ErrorKind::InvalidArgument, "default boxes need rho1 > 0");
    NpgParams p;
    p.rho0 = rho0;
    p.rho1 = rho1;
    p.sigma = sigma;
    p.a_hi = p.p_hi = rho0 / rho1;
    p.b_hi = rho0;
    return p;
  }

  void validate() const {
    if (!(rho0 >= 0.0) || !(rho1 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "demand parameters must be >= 0");
    if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be non-negative");
    if (!(a_lo < a_hi) || !(p_lo < p_hi) || !(b_lo < b_hi)) throw Error(ErrorKind::InvalidArgument, "empty action box");
    if (b_lo < 0.0) throw Error(ErrorKind::InvalidArgument, "order quantity must be non-negative");
    if (br_grid < 2) throw Error(ErrorKind::InvalidArgument, "br_grid must be >= 2");
  }
};

inline double npg_expected_demand(const NpgParams& p, double price) { return std::max(0.0, p.rho0 - p.rho1 * price); }

/// E[max(0, k - X)] and E[max(0, X - k)] for X ~ N(mu, s^2).
inline double normal_shortfall(double mu, double s, double k) {
  if (s <= 0.0) return std::max(0.0, k - mu);
  static const boost::math::normal std_normal;
  const double z = (k - mu) / s;
  return (k - mu) * boost::math::cdf(std_normal, z) + s * boost::math::pdf(std_normal, z);
}
inline double normal_excess(double mu, double s, double k) {
  if (s <= 0.0) return std::max(0.0, mu - k);
  static const boost::math::normal std_normal;
  const double z = (mu - k) / s;
  return (mu - k) * boost::math::cdf(std_normal, z) + s * boost::math::pdf(std_normal, z);
}

/// E[min(d, b)] with d = max(0, X) and b >= 0, i.e. E[clamp(X, 0, b)].
inline double npg_expected_sales(const NpgParams& p, double b, double price) {
  const double mu = npg_expected_demand(p, price);
  return mu + normal_shortfall(mu, p.sigma, 0.0) - normal_excess(mu, p.sigma, b);
}

inline Rewards npg_mean(const NpgParams& p, double a, double b, double price) {
  return {a * b, price * npg_expected_sales(p, b, price) - a * b};
}

template <class Gen>
double npg_draw_demand(const NpgParams& p, double price, Gen& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return std::max(0.0, npg_expected_demand(p, price) + p.sigma * n(rng));
}

template <class Gen>
Rewards npg_step(const NpgParams& p, double a, double b, double price, Gen& rng) {
  const double d = npg_draw_demand(p, price, rng);
  return {a * b, price * std::min(d, b) - a * b};
}

struct NpgResponse {
  double b = 0.0;
  double price = 0.0;
  double value = 0.0;  // follower mean profit
};

/// Follower best response by a br_grid x br_grid scan and Nelder-Mead refinement.
inline NpgResponse npg_follower_br(const NpgParams& p, double a) {
  const Box box{(Vector(2) << p.b_lo, p.p_lo).finished(), (Vector(2) << p.b_hi, p.p_hi).finished()};
  auto f = [&](const Vector& x) { return npg_mean(p, a, x[0], x[1]).follower; };
  Vector best(2);
  double best_v = -std::numeric_limits<double>::infinity();
  const int g = p.br_grid;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      Vector x(2);
      x << p.b_lo + (p.b_hi - p.b_lo) * i / (g - 1), p.p_lo + (p.p_hi - p.p_lo) * j / (g - 1);
      const double v = f(x);
      if (v > best_v) {
        best_v = v;
        best = x;
      }
    }
  }
  optim::NelderMeadOptions opt;
  opt.initial_step = 1.0 / (g - 1);
  opt.xtol = 1e-10;
  opt.ftol = 1e-14;
  const optim::VectorResult r = optim::nelder_mead_max(f, best, box, opt);
  if (r.value >= best_v) return {r.x[0], r.x[1], r.value};
  return {best[0], best[1], best_v};
}

/// Critical-fractile order for a fixed price: P(d <= b) = 1 - a / price.
inline double npg_fractile_order(const NpgParams& p, double a, double price) {
  if (!(price > a)) return p.b_lo;
  const double mu = npg_expected_demand(p, price);
  if (p.sigma <= 0.0) return std::clamp(mu, p.b_lo, p.b_hi);
  static const boost::math::normal std_normal;
  const double q = 1.0 - a / price;
  if (q >= 1.0) return p.b_hi;  // free stock: order as much as allowed
  const double b = mu + p.sigma * boost::math::quantile(std_normal, q);
  return std::clamp(std::max(b, 0.0), p.b_lo, p.b_hi);
}

/// Independent best response: price searched in 1-D with the order fixed
/// by the critical fractile.
inline NpgResponse npg_follower_br_fractile(const NpgParams& p, double a, int grid = 2001) {
  auto f = [&](double price) { return npg_mean(p, a, npg_fractile_order(p, a, price), price).follower; };
  const optim::ScalarResult r = optim::grid_golden_max(f, p.p_lo, p.p_hi, grid, 1e-10);
  return {npg_fractile_order(p, a, r.x), r.x, r.value};
}

inline EquilibriumCertificate npg_equilibrium(const NpgParams& p, int resolution) {
  p.validate();
  if (resolution < 2) throw Error(ErrorKind::InvalidArgument, "resolution must be >= 2");
  auto lead = [&](double a) {
    const NpgResponse r = npg_follower_br(p, a);
    return npg_mean(p, a, r.b, r.price).leader;
  };
  const optim::ScalarResult r = optim::grid_golden_max(lead, p.a_lo, p.a_hi, resolution, 1e-8);
  const NpgResponse br = npg_follower_br(p, r.x);
  const NpgResponse check = npg_follower_br_fractile(p, r.x);
  EquilibriumCertificate c;
  c.a_star = Vector::Constant(1, r.x);
  c.b_star = (Vector(2) << br.b, br.price).finished();
  c.value = npg_mean(p, r.x, br.b, br.price).leader;
  c.method = "grid+golden-section over a; grid+nelder-mead follower";
  c.resolution = resolution;
  c.inner_residual = std::max(0.0, check.value - br.value);  // follower suboptimality vs fractile search
  const double h = 1e-5 * (p.a_hi - p.a_lo);
  if (r.x - h > p.a_lo && r.x + h < p.a_hi) c.foc_residual = std::abs(lead(r.x + h) - lead(r.x - h)) / (2 * h);
  return c;
}

class NpgGame : public GameEnv {
 public:
  explicit NpgGame(NpgParams p) : p_(p) { p_.validate(); }

  const NpgParams& params() const { return p_; }
  std::string name() const override { return "npg"; }
  Box leader_box() const override { return Box::uniform(1, p_.a_lo, p_.a_hi); }
  Box follower_box() const override {
    return Box{(Vector(2) << p_.b_lo, p_.p_lo).finished(), (Vector(2) << p_.b_hi, p_.p_hi).finished()};
  }
  Vector follower_best_response(const Vector& a) const override {
    const NpgResponse r = npg_follower_br(p_, a[0]);
    return (Vector(2) << r.b, r.price).finished();
  }
  Rewards mean_rewards(const Vector& a, const Vector& b) const override { return npg_mean(p_, a[0], b[0], b[1]); }
  Rewards sample_rewards(const Vector& a, const Vector& b, Rng& rng) const override {
    return npg_step(p_, a[0], b[0], b[1], rng);
  }
  EquilibriumCertificate equilibrium(int resolution) const override { return npg_equilibrium(p_, resolution); }
  double noise_scale() const override { return p_.sigma; }

 private:
  NpgParams p_;
};

}  // namespace stackmanifold::games
