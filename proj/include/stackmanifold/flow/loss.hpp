#pragma once

#include "stackmanifold/flow/map.hpp"

#include <cmath>
#include <random>

namespace stackmanifold::flow {

struct LossConfig {
  double alpha_n = 0.5;
  double alpha_r = 1.0;
  double alpha_l = 1.5;
  double alpha_p = 0.5;
  double C = 0.5;              // Lipschitz target
  double gamma_rep = 0.5;
  double sigma_perturb = 0.01;
  double lr = 0.05;
  int epochs = 20000;
  int batch = 2048;
  double grad_clip = 10.0;
  double lip_step = 1e-5;      // forward-difference step for Jacobian norms

  void validate() const {
    for (double w : {alpha_n, alpha_r, alpha_l, alpha_p, C})
      if (!(w >= 0.0)) throw Error(ErrorKind::InvalidArgument, "loss weights and C must be non-negative");
    if (!(gamma_rep > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma_rep must be positive");
    if (!(sigma_perturb > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma_perturb must be positive");
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
    if (epochs < 0 || batch < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 0 and batch >= 1");
    if (!(lip_step > 0.0)) throw Error(ErrorKind::InvalidArgument, "lip_step must be positive");
  }
};

struct LossBreakdown {
  double nll = 0.0;
  double repulsion = 0.0;
  double lipschitz = 0.0;
  double perturbation = 0.0;
  double total = 0.0;
};

inline const double kLog2Pi = std::log(2.0 * kPi);

/// Mean of 0.5 |z|^2 + (d/2) log 2 pi - logdet over columns.
inline double nll_value(const Matrix& z, const Vector& logdet) {
  if (z.cols() == 0) throw Error(ErrorKind::InvalidArgument, "empty batch");
  const double d = double(z.rows());
  return (0.5 * z.colwise().squaredNorm().transpose().array() + 0.5 * d * kLog2Pi - logdet.array()).mean();
}

inline Matrix stacked_z(const BatchForward& f) {
  Matrix z(f.z[0].rows() + f.z[1].rows(), f.z[0].cols());
  z << f.z[0], f.z[1];
  return z;
}

/// X holds one joint action per column (leader rows first).
inline double nll_loss(const FlowModel& m, const Matrix& X) {
  const BatchForward f = forward_batch(m, X, false);
  return nll_value(stacked_z(f), f.stack_logdet);
}

/// Sum over ordered pairs i != j of exp(-acos<y_i,y_j> / gamma). If grad is
/// given it receives dL/dY.
inline double repulsion_loss(const Matrix& Y, double gamma, Matrix* grad = nullptr) {
  if (Y.cols() < 2) throw Error(ErrorKind::InvalidArgument, "repulsion needs at least two points");
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  const Eigen::ArrayXXd C = (Y.transpose() * Y).array().min(1.0).max(-1.0);
  Eigen::ArrayXXd T = (-C.acos() / gamma).exp();
  T.matrix().diagonal().setZero();
  const double value = T.sum();
  if (grad) {
    // d/dc exp(-acos(c)/gamma) = exp(...) / (gamma sqrt(1 - c^2))
    Eigen::ArrayXXd W = T / (gamma * (1.0 - C.square()).max(1e-12).sqrt());
    W.matrix().diagonal().setZero();
    *grad = 2.0 * Y * W.matrix();
  }
  return value;
}

struct JacobianNorms {
  Vector a;  // Frobenius norm of dphi/da per column
  Vector b;
};

/// Forward-difference Frobenius norms of the leader/follower Jacobian blocks.
inline JacobianNorms jacobian_block_norms(const FlowModel& m, const Matrix& X, double h) {
  const BatchForward f0 = forward_batch(m, X, false);
  JacobianNorms out{Vector::Zero(X.cols()), Vector::Zero(X.cols())};
  for (Eigen::Index k = 0; k < X.rows(); ++k) {
    Matrix Xk = X;
    Xk.row(k).array() += h;
    const BatchForward fk = forward_batch(m, Xk, false);
    const Vector sq = (fk.y - f0.y).colwise().squaredNorm().transpose();
    (k < m.dim_a() ? out.a : out.b) += sq;
  }
  out.a = out.a.cwiseSqrt() / h;
  out.b = out.b.cwiseSqrt() / h;
  return out;
}

inline double lipschitz_loss(const FlowModel& m, const Matrix& X, double C, double h = 1e-5) {
  if (X.cols() == 0) throw Error(ErrorKind::InvalidArgument, "empty batch");
  const JacobianNorms n = jacobian_block_norms(m, X, h);
  return (n.a + n.b).array().operator-(C).abs().mean();
}

/// Sum over output components of the population variance (across the batch)
/// of phi(x) - phi(x + noise).
inline double perturbation_value(const Matrix& delta) {
  const Vector mean = delta.rowwise().mean();
  return (delta.colwise() - mean).squaredNorm() / double(delta.cols());
}

template <class Gen>
Matrix gaussian_noise(Eigen::Index rows, Eigen::Index cols, double sigma, Gen& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix E(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) E(r, c) = sigma * n01(rng);
  return E;
}

inline double perturbation_loss_with_noise(const FlowModel& m, const Matrix& X, const Matrix& noise) {
  const BatchForward f0 = forward_batch(m, X, false);
  const BatchForward fp = forward_batch(m, X + noise, false);
  return perturbation_value(f0.y - fp.y);
}

template <class Gen>
double perturbation_loss(const FlowModel& m, const Matrix& X, double sigma, Gen& rng) {
  if (X.cols() == 0) throw Error(ErrorKind::InvalidArgument, "empty batch");
  return perturbation_loss_with_noise(m, X, gaussian_noise(X.rows(), X.cols(), sigma, rng));
}

/// Composite loss on batch X with perturbation noise `noise`; fills grad
/// (same layout as the model parameters) when non-null.
inline LossBreakdown evaluate_loss(const FlowModel& m, const Matrix& X, const Matrix& noise, const LossConfig& cfg,
                                   Vector* grad) {
  if (X.cols() == 0) throw Error(ErrorKind::InvalidArgument, "empty batch");
  const Eigen::Index N = X.cols();
  const double invN = 1.0 / double(N);
  const bool g = grad != nullptr;
  if (g) *grad = Vector::Zero(m.param_count());
  LossBreakdown out;

  const BatchForward f0 = forward_batch(m, X, g);
  out.nll = nll_value(stacked_z(f0), f0.stack_logdet);
  Matrix g_y0 = Matrix::Zero(m.D(), N);

  if (N >= 2) {
    Matrix g_rep;
    out.repulsion = repulsion_loss(f0.y, cfg.gamma_rep, g && cfg.alpha_r > 0 ? &g_rep : nullptr);
    if (g && cfg.alpha_r > 0) g_y0 += cfg.alpha_r * g_rep;
  }

  // Lipschitz surrogate: forward differences along every action coordinate.
  const double h = cfg.lip_step;
  std::vector<BatchForward> fk(static_cast<std::size_t>(X.rows()));
  std::vector<Matrix> dk(fk.size());
  Vector sq_a = Vector::Zero(N), sq_b = Vector::Zero(N);
  for (Eigen::Index k = 0; k < X.rows(); ++k) {
    Matrix Xk = X;
    Xk.row(k).array() += h;
    fk[std::size_t(k)] = forward_batch(m, Xk, g && cfg.alpha_l > 0);
    dk[std::size_t(k)] = fk[std::size_t(k)].y - f0.y;
    (k < m.dim_a() ? sq_a : sq_b) += dk[std::size_t(k)].colwise().squaredNorm().transpose();
  }
  const Vector na = sq_a.cwiseSqrt() / h;
  const Vector nb = sq_b.cwiseSqrt() / h;
  const Vector excess = (na + nb).array() - cfg.C;
  out.lipschitz = excess.cwiseAbs().mean();
  if (g && cfg.alpha_l > 0) {
    for (Eigen::Index k = 0; k < X.rows(); ++k) {
      const Vector& nrm = k < m.dim_a() ? na : nb;
      Matrix gk = Matrix::Zero(m.D(), N);
      for (Eigen::Index c = 0; c < N; ++c) {
        if (!(nrm[c] > 0.0)) continue;
        const double sgn = excess[c] > 0 ? 1.0 : (excess[c] < 0 ? -1.0 : 0.0);
        gk.col(c) = (cfg.alpha_l * sgn * invN / (h * h * nrm[c])) * dk[std::size_t(k)].col(c);
      }
      g_y0 -= gk;
      backward_batch(m, fk[std::size_t(k)], &gk, nullptr, Vector::Zero(N), *grad);
    }
  }

  const BatchForward fp = forward_batch(m, X + noise, g && cfg.alpha_p > 0);
  const Matrix delta = f0.y - fp.y;
  out.perturbation = perturbation_value(delta);
  if (g && cfg.alpha_p > 0) {
    const Vector mean = delta.rowwise().mean();
    const Matrix gd = (2.0 * cfg.alpha_p * invN) * (delta.colwise() - mean);
    g_y0 += gd;
    const Matrix neg = -gd;
    backward_batch(m, fp, &neg, nullptr, Vector::Zero(N), *grad);
  }

  if (g) {
    std::array<Matrix, 2> g_z{(cfg.alpha_n * invN) * f0.z[0], (cfg.alpha_n * invN) * f0.z[1]};
    const Vector g_ld = Vector::Constant(N, -cfg.alpha_n * invN);
    backward_batch(m, f0, &g_y0, &g_z, g_ld, *grad);
  }
  out.total = cfg.alpha_n * out.nll + cfg.alpha_r * out.repulsion + cfg.alpha_l * out.lipschitz +
              cfg.alpha_p * out.perturbation;
  return out;
}

}  // namespace stackmanifold::flow
