#pragma once

#include "stackmanifold/flow/loss.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace stackmanifold::flow {

struct ReconstructionStats {
  double mean = 0.0;  // mean per-sample l2 error of (a, b)
  double max = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double stack_mean = 0.0;  // bijective head stacks only, before squash and angle selection
  double padding_residual = 0.0;
  std::size_t samples = 0;
};

/// Reconstruction of joint actions through forward then inverse. Angles
/// that leave the squash image are clamped so the statistic stays finite.
inline ReconstructionStats reconstruction_stats(const FlowModel& m, const Matrix& X) {
  ReconstructionStats s;
  s.samples = std::size_t(X.cols());
  if (X.cols() == 0) return s;
  const BatchForward f = forward_batch(m, X, false);
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const Vector a = X.col(c).head(m.dim_a());
    const Vector b = X.col(c).tail(m.dim_b());
    const geometry::AngularCoords ang = geometry::cartesian_to_spherical(f.y.col(c));
    const HeadInverse ha = invert_head(m, 0, head_block(m, 0, ang.angles), true);
    const HeadInverse hb = invert_head(m, 1, head_block(m, 1, ang.angles), true);
    const double ea = (ha.action - a).norm();
    const double eb = (hb.action - b).norm();
    const double e = std::sqrt(ea * ea + eb * eb);
    s.mean += e;
    s.mean_a += ea;
    s.mean_b += eb;
    s.max = std::max(s.max, e);
    s.padding_residual = std::max({s.padding_residual, ha.padding_residual, hb.padding_residual});
    const double sa = head_stack_roundtrip_error(m, 0, a);
    const double sb = head_stack_roundtrip_error(m, 1, b);
    s.stack_mean += std::sqrt(sa * sa + sb * sb);
  }
  const double n = double(X.cols());
  s.mean /= n;
  s.mean_a /= n;
  s.mean_b /= n;
  s.stack_mean /= n;
  return s;
}

template <class Gen>
Matrix sample_unit_box(Eigen::Index dims, Eigen::Index n, Gen& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix X(dims, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < dims; ++r) X(r, c) = u(rng);
  return X;
}

struct TrainingReport {
  std::vector<double> nll, repulsion, lipschitz, perturbation, total;
  ReconstructionStats test;
  int epochs_run = 0;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, TrainingReport partial)
      : Error(ErrorKind::TrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch)),
        epoch_(epoch),
        report_(std::move(partial)) {}
  int epoch() const { return epoch_; }
  const TrainingReport& report() const { return report_; }

 private:
  int epoch_;
  TrainingReport report_;
};

/// Mini-batch SGD with gradient-norm clipping. Epoch losses are batch means
/// evaluated before each step. Deterministic given the rng state.
template <class Gen>
TrainingReport train(FlowModel& m, const Matrix& data, const Matrix& test, const LossConfig& cfg, Gen& rng) {
  cfg.validate();
  if (data.rows() != m.dim_a() + m.dim_b()) throw Error(ErrorKind::InvalidArgument, "training data has wrong dimension");
  if (data.cols() < 2) throw Error(ErrorKind::InvalidArgument, "training needs at least two samples");
  TrainingReport rep;
  const Eigen::Index N = data.cols();
  const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch, N);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  Vector grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown acc;
    int steps = 0;
    for (Eigen::Index start = 0; start + batch <= N; start += batch) {
      Matrix X(data.rows(), batch);
      for (Eigen::Index c = 0; c < batch; ++c) X.col(c) = data.col(order[std::size_t(start + c)]);
      const Matrix noise = gaussian_noise(X.rows(), X.cols(), cfg.sigma_perturb, rng);
      const LossBreakdown l = evaluate_loss(m, X, noise, cfg, &grad);
      if (!std::isfinite(l.total) || !grad.allFinite()) {
        rep.epochs_run = epoch;
        throw TrainingDiverged(epoch, rep);
      }
      const double gn = grad.norm();
      if (gn > cfg.grad_clip) grad *= cfg.grad_clip / gn;
      m.params() -= cfg.lr * grad;
      acc.nll += l.nll;
      acc.repulsion += l.repulsion;
      acc.lipschitz += l.lipschitz;
      acc.perturbation += l.perturbation;
      acc.total += l.total;
      ++steps;
    }
    rep.nll.push_back(acc.nll / steps);
    rep.repulsion.push_back(acc.repulsion / steps);
    rep.lipschitz.push_back(acc.lipschitz / steps);
    rep.perturbation.push_back(acc.perturbation / steps);
    rep.total.push_back(acc.total / steps);
    rep.epochs_run = epoch + 1;
  }
  if (!m.params().allFinite()) throw TrainingDiverged(cfg.epochs, rep);
  rep.test = reconstruction_stats(m, test);
  return rep;
}

}  // namespace stackmanifold::flow
