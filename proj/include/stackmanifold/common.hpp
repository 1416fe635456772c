#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace stackmanifold {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

enum class ErrorKind {
  InvalidArgument,
  DegenerateInput,
  DegenerateBall,
  DegenerateDirection,
  NotInImage,
  TrainingDiverged,
  TruncatedFile,
  VersionMismatch,
  UnsupportedEnvironment,
  IndifferentFollower,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::DegenerateBall: return "degenerate-ball";
    case ErrorKind::DegenerateDirection: return "degenerate-direction";
    case ErrorKind::NotInImage: return "not-in-image";
    case ErrorKind::TrainingDiverged: return "training-diverged";
    case ErrorKind::TruncatedFile: return "truncated-file";
    case ErrorKind::VersionMismatch: return "version-mismatch";
    case ErrorKind::UnsupportedEnvironment: return "unsupported-environment";
    case ErrorKind::IndifferentFollower: return "indifferent-follower";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers can branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Axis-aligned action box.
struct Box {
  Vector lo;
  Vector hi;

  Eigen::Index dim() const { return lo.size(); }

  bool contains(const Vector& x, double tol = 1e-12) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x[i] >= lo[i] - tol && x[i] <= hi[i] + tol)) return false;
    }
    return true;
  }

  Vector clamp(const Vector& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

  // Affine maps between the box and the unit cube used by the flow.
  Vector to_unit(const Vector& x) const {
    return ((x - lo).array() / (hi - lo).array()).matrix();
  }
  Vector from_unit(const Vector& u) const {
    return lo + (u.array() * (hi - lo).array()).matrix();
  }

  static Box uniform(Eigen::Index dim, double lo, double hi) {
    return Box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  }
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace stackmanifold
