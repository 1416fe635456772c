#pragma once

#include "stackmanifold/common.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stackmanifold::geometry {

/// Angles are stored as [nu_1 .. nu_{D-2}, gamma]: latitudes in [0, pi],
/// azimuth in [0, 2 pi).
struct AngularCoords {
  double radius = 1.0;
  Vector angles;

  Eigen::Index dim() const { return angles.size() + 1; }
};

struct GeodesicBall {
  Vector center;  // unit norm
  double radius = 0.0;
};

inline constexpr double kUnitTol = 1e-9;

inline double wrap_azimuth(double g) {
  double w = std::fmod(g, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

inline bool is_unit(const Vector& v, double tol = kUnitTol) {
  return std::abs(v.norm() - 1.0) <= tol;
}

inline void validate(const AngularCoords& c) {
  const Eigen::Index n = c.angles.size();
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "need at least one angle (D >= 2)");
  if (!(c.radius > 0.0) || !std::isfinite(c.radius))
    throw Error(ErrorKind::InvalidArgument, "radius must be positive and finite");
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    if (!(c.angles[i] >= 0.0 && c.angles[i] <= kPi))
      throw Error(ErrorKind::InvalidArgument, "latitude outside [0, pi]");
  }
  const double g = c.angles[n - 1];
  if (!(g >= 0.0 && g < kTwoPi)) throw Error(ErrorKind::InvalidArgument, "azimuth outside [0, 2pi)");
}

/// x_1 = r cos nu_1, x_i = r prod_{j<i} sin nu_j cos nu_i, x_D = r prod sin.
inline Vector spherical_to_cartesian(const AngularCoords& c) {
  validate(c);
  const Eigen::Index n = c.angles.size();
  Vector x(n + 1);
  double prod = c.radius;
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = prod * std::cos(c.angles[i]);
    prod *= std::sin(c.angles[i]);
  }
  x[n] = prod;
  return x;
}

inline Vector spherical_to_cartesian(const Vector& angles, double radius = 1.0) {
  return spherical_to_cartesian(AngularCoords{radius, angles});
}

/// Exact inverse of spherical_to_cartesian on the principal domain. Latitudes
/// use atan2 of the trailing norm so they stay accurate near the poles.
inline AngularCoords cartesian_to_spherical(const Vector& p) {
  const Eigen::Index d = p.size();
  if (d < 2) throw Error(ErrorKind::InvalidArgument, "point must have dimension >= 2");
  if (!p.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite coordinates");
  const double r = p.norm();
  if (!(r > 0.0)) throw Error(ErrorKind::DegenerateInput, "zero vector has no direction");

  AngularCoords out;
  out.radius = r;
  out.angles.resize(d - 1);
  // tail[i] = ||p_{i..d-1}||, accumulated from the end to avoid cancellation.
  Vector tail(d + 1);
  tail[d] = 0.0;
  for (Eigen::Index i = d - 1; i >= 0; --i) tail[i] = std::hypot(tail[i + 1], p[i]);
  for (Eigen::Index i = 0; i + 2 < d; ++i) out.angles[i] = std::atan2(tail[i + 1], p[i]);
  out.angles[d - 2] = wrap_azimuth(std::atan2(p[d - 1], p[d - 2]));
  return out;
}

inline Vector project_to_sphere(const Vector& theta) {
  if (!theta.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite vector");
  const double n = theta.norm();
  if (!(n > 0.0)) throw Error(ErrorKind::DegenerateInput, "cannot project the zero vector");
  return theta / n;
}

/// Great-circle angle between the directions of u and v, in [0, pi].
inline double geodesic_distance(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw Error(ErrorKind::InvalidArgument, "dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error(ErrorKind::DegenerateInput, "zero-norm input");
  const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return std::acos(c);
}

/// Chord length J on the unit sphere to the subtended angle.
inline double cartesian_radius_to_geodesic(double J) {
  if (!(J >= 0.0 && J <= 2.0)) throw Error(ErrorKind::InvalidArgument, "chord length must lie in [0, 2]");
  return std::acos(std::clamp(1.0 - 0.5 * J * J, -1.0, 1.0));
}

/// Unit tangent at `from` pointing along the great circle toward `to`.
inline Vector tangent_toward(const Vector& from, const Vector& to) {
  Vector t = to - from.dot(to) * from;
  const double n = t.norm();
  if (!(n > 1e-12)) throw Error(ErrorKind::DegenerateDirection, "points are (anti)collinear");
  return t / n;
}

/// Walks the great circle from `from` toward `to` by `step` radians.
inline Vector geodesic_step(const Vector& from, const Vector& to, double step) {
  const Vector t = tangent_toward(from, to);
  return std::cos(step) * from + std::sin(step) * t;
}

/// Isotropic unit vector orthogonal to `center`.
template <class Gen>
Vector sample_tangent(const Vector& center, Gen& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vector g(center.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = n01(rng);
    g -= center.dot(g) * center;
    const double n = g.norm();
    if (n > 1e-8) return g / n;
  }
  throw Error(ErrorKind::DegenerateInput, "failed to draw a tangent direction");
}

template <class Gen>
Vector sample_sphere(Eigen::Index dim, Gen& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (;;) {
    Vector g(dim);
    for (Eigen::Index i = 0; i < dim; ++i) g[i] = n01(rng);
    const double n = g.norm();
    if (n > 1e-12) return g / n;
  }
}

inline constexpr double kBallEps = 1e-6;

inline void validate(const GeodesicBall& ball) {
  if (ball.center.size() < 2) throw Error(ErrorKind::InvalidArgument, "ball center needs D >= 2");
  if (!is_unit(ball.center)) throw Error(ErrorKind::InvalidArgument, "ball center must be a unit vector");
  if (!(ball.radius > 0.0) || ball.radius >= kPi - kBallEps)
    throw Error(ErrorKind::DegenerateBall, "ball radius must lie strictly inside (0, pi)");
}

/// Point at exactly `radius` from the center, direction uniform on the
/// tangent sphere.
template <class Gen>
Vector sample_ball_boundary(const GeodesicBall& ball, Gen& rng) {
  validate(ball);
  const Vector t = sample_tangent(ball.center, rng);
  Vector u = std::cos(ball.radius) * ball.center + std::sin(ball.radius) * t;
  return u / u.norm();
}

}  // namespace stackmanifold::geometry
