#pragma once

#include "stackmanifold/common.hpp"

#include <limits>
#include <string>
#include <vector>

namespace stackmanifold::games {

struct Rewards {
  double leader = 0.0;
  double follower = 0.0;
};

struct EquilibriumCertificate {
  Vector a_star;
  Vector b_star;
  double value = 0.0;  // leader mean reward at (a*, b*)
  std::string method;
  int resolution = 0;
  double foc_residual = std::numeric_limits<double>::quiet_NaN();
  double inner_residual = std::numeric_limits<double>::quiet_NaN();
  double start_dispersion = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> constraint_activity;  // per active constraint: 1 if tight
};

/// A repeated Stackelberg game. Implementations are immutable and every
/// random draw goes through the caller's generator.
class GameEnv {
 public:
  virtual ~GameEnv() = default;

  virtual std::string name() const = 0;
  virtual Box leader_box() const = 0;
  virtual Box follower_box() const = 0;

  /// Maps a proposed action to an executable one. Sets *adjusted when the
  /// input had to be changed.
  virtual Vector sanitize_leader(const Vector& a, bool* adjusted = nullptr) const {
    return clamp_flag(leader_box(), a, adjusted);
  }
  virtual Vector sanitize_follower(const Vector& b, bool* adjusted = nullptr) const {
    return clamp_flag(follower_box(), b, adjusted);
  }

  virtual Vector follower_best_response(const Vector& a) const = 0;
  virtual Rewards mean_rewards(const Vector& a, const Vector& b) const = 0;
  virtual Rewards sample_rewards(const Vector& a, const Vector& b, Rng& rng) const = 0;
  virtual EquilibriumCertificate equilibrium(int resolution) const = 0;

  /// Leader reward noise scale, used for tolerance bands.
  virtual double noise_scale() const = 0;

  double leader_value(const Vector& a) const { return mean_rewards(a, follower_best_response(a)).leader; }

 protected:
  static Vector clamp_flag(const Box& box, const Vector& x, bool* adjusted) {
    if (x.size() != box.dim()) throw Error(ErrorKind::InvalidArgument, "action dimension mismatch");
    Vector c = box.clamp(x);
    if (adjusted) *adjusted = (c - x).cwiseAbs().maxCoeff() > 0.0;
    return c;
  }
};

}  // namespace stackmanifold::games
