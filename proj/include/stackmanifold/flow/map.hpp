#pragma once

#include "stackmanifold/flow/model.hpp"

#include <cmath>
#include <variant>

namespace stackmanifold::flow {

inline constexpr double kDomainTol = 1e-12;

/// The flow's action domain is the unit cube; game boxes are rescaled into it.
inline void check_in_domain(const Vector& x, int dim, const char* who) {
  if (x.size() != dim) throw Error(ErrorKind::InvalidArgument, std::string(who) + ": dimension mismatch");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= -kDomainTol && x[i] <= 1.0 + kDomainTol))
      throw Error(ErrorKind::InvalidArgument, std::string(who) + ": action outside [0,1]");
  }
}

struct BatchForward {
  std::array<Matrix, 2> z;  // stack outputs per head (width x N)
  std::array<HeadCache, 2> cache;
  Matrix angles;            // (D-1) x N
  Matrix y;                 // D x N, unit columns
  Vector stack_logdet;      // coupling layers only
  Vector squash_logdet;
};

/// Rows of X: leader coordinates then follower coordinates.
inline BatchForward forward_batch(const FlowModel& m, const Matrix& X, bool keep_cache) {
  const Eigen::Index N = X.cols();
  BatchForward out;
  out.stack_logdet = Vector::Zero(N);
  out.squash_logdet = Vector::Zero(N);
  out.angles.resize(m.D() - 1, N);
  Eigen::Index row = 0;
  for (int h = 0; h < 2; ++h) {
    const HeadLayout& head = m.head(h);
    Matrix in = Matrix::Constant(head.width, N, kPadValue);
    in.topRows(head.dim) = X.middleRows(row, head.dim);
    row += head.dim;
    out.z[h] = head_forward(m.params(), head, std::move(in), out.stack_logdet, keep_cache ? &out.cache[h] : nullptr);
    for (int k = 0; k < head.n_angles; ++k) {
      const auto range = FlowModel::angle_range(head, k);
      const int gi = angle_index(m.D(), h, k);
      const double log_span = std::log(range[1] - range[0]);
      for (Eigen::Index c = 0; c < N; ++c) {
        const double zc = out.z[h](k, c);
        out.angles(gi, c) = squash(range, zc);
        out.squash_logdet[c] += log_span + log_sigmoid_derivative(zc);
      }
    }
  }
  out.y = spherical_batch(out.angles);
  return out;
}

/// Accumulates dL/dparams given dL/dy, dL/dz (per head, may be empty) and
/// dL/d(stack logdet).
inline void backward_batch(const FlowModel& m, const BatchForward& f, const Matrix* g_y,
                           const std::array<Matrix, 2>* g_z, const Vector& g_logdet, Vector& grad) {
  const Eigen::Index N = f.y.cols();
  Matrix g_angles = g_y ? spherical_backward(f.angles, f.y, *g_y) : Matrix::Zero(m.D() - 1, N);
  for (int h = 0; h < 2; ++h) {
    const HeadLayout& head = m.head(h);
    Matrix G = (g_z && (*g_z)[h].size() > 0) ? (*g_z)[h] : Matrix::Zero(head.width, N);
    for (int k = 0; k < head.n_angles; ++k) {
      const auto range = FlowModel::angle_range(head, k);
      const int gi = angle_index(m.D(), h, k);
      for (Eigen::Index c = 0; c < N; ++c) {
        const double s = sigmoid(f.z[h](k, c));
        G(k, c) += g_angles(gi, c) * (range[1] - range[0]) * s * (1.0 - s);
      }
    }
    head_backward(m.params(), head, f.cache[h], std::move(G), g_logdet, grad);
  }
}

struct ForwardResult {
  Vector point;   // unit vector in R^D
  Vector angles;  // D-1 angles in the global layout
  Vector z;       // stacked head outputs
  double logdet = 0.0;        // coupling layers plus squash
  double stack_logdet = 0.0;  // coupling layers only
};

inline Matrix stack_actions(const Vector& a, const Vector& b) {
  Matrix X(a.size() + b.size(), 1);
  X.col(0) << a, b;
  return X;
}

inline ForwardResult forward(const FlowModel& m, const Vector& a, const Vector& b) {
  check_in_domain(a, m.dim_a(), "forward");
  check_in_domain(b, m.dim_b(), "forward");
  const BatchForward f = forward_batch(m, stack_actions(a, b), false);
  ForwardResult r;
  r.point = f.y.col(0);
  r.angles = f.angles.col(0);
  r.z.resize(f.z[0].rows() + f.z[1].rows());
  r.z << f.z[0].col(0), f.z[1].col(0);
  r.stack_logdet = f.stack_logdet[0];
  r.logdet = f.stack_logdet[0] + f.squash_logdet[0];
  return r;
}

/// Head-local angle block (length n_angles of head h) from a global angle vector.
inline Vector head_block(const FlowModel& m, int h, const Vector& angles) {
  const HeadLayout& head = m.head(h);
  Vector out(head.n_angles);
  for (int k = 0; k < head.n_angles; ++k) out[k] = angles[angle_index(m.D(), h, k)];
  return out;
}

struct HeadInverse {
  Vector action;
  double padding_residual = 0.0;  // max |padding channel - kPadValue|
  bool clamped = false;           // some angle lay outside the squash image
};

inline constexpr double kClampFraction = 1e-6;

/// Inverts one head from its angle block. With clamp == false an angle
/// outside the squash image raises not-in-image; otherwise it is pulled
/// inside the image and the result is flagged.
inline HeadInverse invert_head(const FlowModel& m, int h, const Vector& block, bool clamp) {
  const HeadLayout& head = m.head(h);
  if (block.size() != head.n_angles) throw Error(ErrorKind::InvalidArgument, "angle block size mismatch");
  HeadInverse r;
  Vector z = Vector::Zero(head.width);  // dropped overflow channels are taken as 0
  for (int k = 0; k < head.n_angles; ++k) {
    const auto range = FlowModel::angle_range(head, k);
    if (!unsquash(range, block[k], z[k])) {
      if (!clamp) throw Error(ErrorKind::NotInImage, "angle outside the squash image");
      const double span = range[1] - range[0];
      double u = (block[k] - range[0]) / span;
      if (!std::isfinite(u)) u = 0.5;
      u = std::clamp(u, kClampFraction, 1.0 - kClampFraction);
      z[k] = std::log(u) - std::log1p(-u);
      r.clamped = true;
    }
  }
  const Vector x = head_inverse(m.params(), head, z);
  r.action = x.head(head.dim);
  for (int i = head.dim; i < head.width; ++i) r.padding_residual = std::max(r.padding_residual, std::abs(x[i] - kPadValue));
  return r;
}

struct InverseResult {
  Vector a, b;
  double padding_residual = 0.0;
};

inline InverseResult inverse(const FlowModel& m, const Vector& point) {
  if (point.size() != m.D()) throw Error(ErrorKind::InvalidArgument, "inverse: point dimension mismatch");
  const geometry::AngularCoords c = geometry::cartesian_to_spherical(point);
  const HeadInverse ha = invert_head(m, 0, head_block(m, 0, c.angles), false);
  const HeadInverse hb = invert_head(m, 1, head_block(m, 1, c.angles), false);
  return InverseResult{ha.action, hb.action, std::max(ha.padding_residual, hb.padding_residual)};
}

/// Stack-only round trip for one head: the bijective part of the map.
inline double head_stack_roundtrip_error(const FlowModel& m, int h, const Vector& action) {
  const HeadLayout& head = m.head(h);
  Matrix in = Matrix::Constant(head.width, 1, kPadValue);
  in.col(0).head(head.dim) = action;
  Vector ld = Vector::Zero(1);
  const Matrix z = head_forward(m.params(), head, in, ld, nullptr);
  return (head_inverse(m.params(), head, z.col(0)) - in.col(0)).norm();
}

struct FixedLeader {
  Vector a;
};
struct FixedFollower {
  Vector b;
};
using FixedSide = std::variant<FixedLeader, FixedFollower>;

/// Sweeps the free player's unit box on a uniform grid with `resolution`
/// points per dimension and maps each joint action through the flow.
inline std::vector<Vector> isoplane_points(const FlowModel& m, const FixedSide& fixed, int resolution) {
  if (resolution < 2) throw Error(ErrorKind::InvalidArgument, "isoplane resolution must be >= 2");
  const bool leader_fixed = std::holds_alternative<FixedLeader>(fixed);
  const int free_dim = leader_fixed ? m.dim_b() : m.dim_a();
  if (leader_fixed) check_in_domain(std::get<FixedLeader>(fixed).a, m.dim_a(), "isoplane");
  else check_in_domain(std::get<FixedFollower>(fixed).b, m.dim_b(), "isoplane");

  Eigen::Index total = 1;
  for (int i = 0; i < free_dim; ++i) total *= resolution;
  Matrix X(m.dim_a() + m.dim_b(), total);
  std::vector<int> idx(free_dim, 0);
  for (Eigen::Index c = 0; c < total; ++c) {
    Vector free(free_dim);
    for (int i = 0; i < free_dim; ++i) free[i] = double(idx[i]) / (resolution - 1);
    if (leader_fixed) X.col(c) << std::get<FixedLeader>(fixed).a, free;
    else X.col(c) << free, std::get<FixedFollower>(fixed).b;
    for (int i = 0; i < free_dim && ++idx[i] == resolution; ++i) idx[i] = 0;
  }
  const BatchForward f = forward_batch(m, X, false);
  std::vector<Vector> pts(static_cast<std::size_t>(total));
  for (Eigen::Index c = 0; c < total; ++c) pts[std::size_t(c)] = f.y.col(c);
  return pts;
}

}  // namespace stackmanifold::flow
