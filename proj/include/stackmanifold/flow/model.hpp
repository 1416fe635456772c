#pragma once

#include "stackmanifold/common.hpp"
#include "stackmanifold/geometry.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace stackmanifold::flow {

inline constexpr double kSquashMargin = 1e-3;
inline constexpr double kPadValue = 0.5;

struct FlowConfig {
  int D = 4;
  int dim_a = 2;
  int dim_b = 2;
  int layers = 2;   // coupling layers per head
  int hidden = 16;  // scale/shift net hidden width
  std::uint64_t seed = 0;
  double init_scale = 0.1;
  bool zero_init = false;
};

/// Offsets of one dense tanh net inside the flat parameter vector.
/// Declaration order: W1 (hidden x in, column major), b1, W2 (out x hidden), b2.
struct NetLayout {
  Eigen::Index w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  int in = 0, hidden = 0, out = 0;

  Eigen::Index size() const { return Eigen::Index(hidden) * (in + out + 1) + out; }
};

struct CouplingLayout {
  std::vector<int> cond;   // conditioning slots, passed through unchanged
  std::vector<int> trans;  // transformed slots: y = x * exp(s) + t
  std::vector<int> perm;   // applied after the coupling: out[i] = in[perm[i]]
  NetLayout s, t;
};

/// A head owns `n_angles` output angles. Its stack runs on a vector of
/// width max(dim, n_angles): actions padded with kPadValue when dim is
/// smaller, trailing stack outputs dropped when dim is larger.
struct HeadLayout {
  int dim = 0;
  int n_angles = 0;
  int width = 0;
  bool has_azimuth = false;  // the last angle of head A is the azimuth
  std::vector<CouplingLayout> layers;

  int padding() const { return width - dim; }
  int overflow() const { return width - n_angles; }
};

/// Angle split: head B gets floor((D-1)/2) latitudes, head A the remaining
/// latitudes plus the azimuth.
inline std::array<int, 2> angle_split(int D) {
  const int nb = (D - 1) / 2;
  return {D - 1 - nb, nb};
}

/// Global angle vector index for head-local angle k.
inline int angle_index(int D, int head, int k) {
  const auto split = angle_split(D);
  if (head == 0) return (k == split[0] - 1) ? D - 2 : k;
  return split[0] - 1 + k;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class FlowModel {
 public:
  FlowModel() = default;

  /// Builds the architecture and initialises weights from cfg.seed.
  explicit FlowModel(const FlowConfig& cfg) : cfg_(cfg) {
    build_layout();
    params_ = Vector::Zero(param_count_);
    init_weights();
  }

  /// Builds the architecture and adopts the given weights verbatim.
  FlowModel(const FlowConfig& cfg, Vector params) : cfg_(cfg) {
    build_layout();
    if (params.size() != param_count_)
      throw Error(ErrorKind::InvalidArgument, "weight count does not match architecture");
    params_ = std::move(params);
  }

  const FlowConfig& config() const { return cfg_; }
  int D() const { return cfg_.D; }
  int dim_a() const { return cfg_.dim_a; }
  int dim_b() const { return cfg_.dim_b; }
  const HeadLayout& head(int h) const { return heads_[h]; }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  Eigen::Index param_count() const { return param_count_; }

  /// Parameter count as a function of hidden width: count = hidden * slope + intercept.
  static std::array<Eigen::Index, 2> param_count_affine(FlowConfig cfg) {
    cfg.hidden = 1;
    FlowModel one(cfg, skip_init{});
    cfg.hidden = 2;
    FlowModel two(cfg, skip_init{});
    const Eigen::Index slope = two.param_count_ - one.param_count_;
    return {slope, one.param_count_ - slope};
  }

  static std::array<double, 2> angle_range(const HeadLayout& h, int k) {
    if (h.has_azimuth && k == h.n_angles - 1) return {0.0, kTwoPi};
    return {kSquashMargin, kPi - kSquashMargin};
  }

 private:
  struct skip_init {};
  FlowModel(const FlowConfig& cfg, skip_init) : cfg_(cfg) { build_layout(); }

  void build_layout() {
    if (cfg_.D < 3) throw Error(ErrorKind::InvalidArgument, "embedding dimension D must be >= 3");
    if (cfg_.dim_a < 1 || cfg_.dim_b < 1) throw Error(ErrorKind::InvalidArgument, "action dimensions must be >= 1");
    if (cfg_.layers < 1) throw Error(ErrorKind::InvalidArgument, "need at least one coupling layer per head");
    if (cfg_.hidden < 1) throw Error(ErrorKind::InvalidArgument, "hidden width must be >= 1");
    const auto split = angle_split(cfg_.D);
    std::uint64_t perm_state = cfg_.seed;
    Eigen::Index offset = 0;
    for (int h = 0; h < 2; ++h) {
      HeadLayout& head = heads_[h];
      head.dim = h == 0 ? cfg_.dim_a : cfg_.dim_b;
      head.n_angles = split[h];
      head.width = std::max(head.dim, head.n_angles);
      head.has_azimuth = h == 0;
      head.layers.assign(cfg_.layers, {});
      for (int l = 0; l < cfg_.layers; ++l) {
        CouplingLayout& c = head.layers[l];
        for (int i = 0; i < head.width; ++i) {
          // A width-1 head has nothing to condition on: s and t are constants.
          const bool conditioning = head.width > 1 && (i % 2) == (l % 2);
          (conditioning ? c.cond : c.trans).push_back(i);
        }
        c.perm.resize(head.width);
        for (int i = 0; i < head.width; ++i) c.perm[i] = i;
        for (int i = head.width - 1; i > 0; --i) {
          const auto j = static_cast<int>(splitmix64(perm_state) % static_cast<std::uint64_t>(i + 1));
          std::swap(c.perm[i], c.perm[j]);
        }
        for (NetLayout* net : {&c.s, &c.t}) {
          net->in = static_cast<int>(c.cond.size());
          net->out = static_cast<int>(c.trans.size());
          net->hidden = cfg_.hidden;
          net->w1 = offset;
          net->b1 = net->w1 + Eigen::Index(net->hidden) * net->in;
          net->w2 = net->b1 + net->hidden;
          net->b2 = net->w2 + Eigen::Index(net->out) * net->hidden;
          offset = net->b2 + net->out;
        }
      }
    }
    param_count_ = offset;
  }

  void init_weights() {
    std::uint64_t s = cfg_.seed ^ 0x5DEECE66DULL;
    Rng rng(splitmix64(s));
    std::normal_distribution<double> n01(0.0, 1.0);
    for (const HeadLayout& head : heads_) {
      for (const CouplingLayout& c : head.layers) {
        for (const NetLayout* net : {&c.s, &c.t}) {
          const double s1 = 1.0 / std::sqrt(std::max(1, net->in));
          for (Eigen::Index i = 0; i < Eigen::Index(net->hidden) * net->in; ++i) params_[net->w1 + i] = s1 * n01(rng);
          const double s2 = cfg_.zero_init ? 0.0 : cfg_.init_scale / std::sqrt(net->hidden);
          for (Eigen::Index i = 0; i < Eigen::Index(net->out) * net->hidden; ++i) params_[net->w2 + i] = s2 * n01(rng);
        }
      }
    }
  }

  FlowConfig cfg_;
  std::array<HeadLayout, 2> heads_;
  Vector params_;
  Eigen::Index param_count_ = 0;
};

// ---------------------------------------------------------------------------
// Dense nets and single-head stacks on column batches (one sample per column).

struct NetCache {
  Matrix hidden;  // tanh activations
  Matrix out;
};

inline void net_forward(const Vector& p, const NetLayout& n, const Matrix& x, NetCache& cache) {
  Eigen::Map<const Matrix> W1(p.data() + n.w1, n.hidden, n.in);
  Eigen::Map<const Vector> b1(p.data() + n.b1, n.hidden);
  Eigen::Map<const Matrix> W2(p.data() + n.w2, n.out, n.hidden);
  Eigen::Map<const Vector> b2(p.data() + n.b2, n.out);
  if (n.in > 0) {
    cache.hidden = (W1 * x).colwise() + b1;
  } else {
    cache.hidden = b1.replicate(1, x.cols());
  }
  cache.hidden = cache.hidden.array().tanh().matrix();
  cache.out = (W2 * cache.hidden).colwise() + b2;
}

/// Accumulates parameter gradients and returns dL/dx for a net given dL/dout.
inline Matrix net_backward(const Vector& p, const NetLayout& n, const Matrix& x, const NetCache& cache,
                           const Matrix& g_out, Vector& grad) {
  Eigen::Map<const Matrix> W1(p.data() + n.w1, n.hidden, n.in);
  Eigen::Map<const Matrix> W2(p.data() + n.w2, n.out, n.hidden);
  Eigen::Map<Matrix> gW1(grad.data() + n.w1, n.hidden, n.in);
  Eigen::Map<Vector> gb1(grad.data() + n.b1, n.hidden);
  Eigen::Map<Matrix> gW2(grad.data() + n.w2, n.out, n.hidden);
  Eigen::Map<Vector> gb2(grad.data() + n.b2, n.out);
  gW2.noalias() += g_out * cache.hidden.transpose();
  gb2 += g_out.rowwise().sum();
  const Matrix g_h = ((W2.transpose() * g_out).array() * (1.0 - cache.hidden.array().square())).matrix();
  gb1 += g_h.rowwise().sum();
  if (n.in == 0) return Matrix(0, x.cols());
  gW1.noalias() += g_h * x.transpose();
  return W1.transpose() * g_h;
}

inline Matrix gather_rows(const Matrix& x, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = x.row(rows[i]);
  return out;
}

struct LayerCache {
  Matrix x_cond, x_trans;
  NetCache s, t;
  Matrix exp_s;
};

struct HeadCache {
  std::vector<LayerCache> layers;
};

/// Runs the coupling/permutation stack. Returns outputs z; logdet (one entry
/// per column) receives the sum of all scale outputs.
inline Matrix head_forward(const Vector& p, const HeadLayout& head, Matrix x, Vector& logdet, HeadCache* cache) {
  if (cache) cache->layers.assign(head.layers.size(), {});
  LayerCache local;
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    const CouplingLayout& c = head.layers[l];
    LayerCache& lc = cache ? cache->layers[l] : local;
    lc.x_cond = gather_rows(x, c.cond);
    lc.x_trans = gather_rows(x, c.trans);
    net_forward(p, c.s, lc.x_cond, lc.s);
    net_forward(p, c.t, lc.x_cond, lc.t);
    lc.exp_s = lc.s.out.array().exp().matrix();
    const Matrix y_trans = (lc.x_trans.array() * lc.exp_s.array() + lc.t.out.array()).matrix();
    logdet += lc.s.out.colwise().sum().transpose();
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < c.cond.size(); ++i) y.row(c.cond[i]) = lc.x_cond.row(Eigen::Index(i));
    for (std::size_t i = 0; i < c.trans.size(); ++i) y.row(c.trans[i]) = y_trans.row(Eigen::Index(i));
    for (int i = 0; i < head.width; ++i) x.row(i) = y.row(c.perm[i]);
  }
  return x;
}

/// Reverse pass through a head. g_z is dL/dz, g_logdet is dL/dlogdet per column.
inline void head_backward(const Vector& p, const HeadLayout& head, const HeadCache& cache, Matrix g,
                          const Vector& g_logdet, Vector& grad) {
  for (std::size_t li = head.layers.size(); li-- > 0;) {
    const CouplingLayout& c = head.layers[li];
    const LayerCache& lc = cache.layers[li];
    Matrix g_y(g.rows(), g.cols());
    for (int i = 0; i < head.width; ++i) g_y.row(c.perm[i]) = g.row(i);
    const Matrix g_ytr = gather_rows(g_y, c.trans);
    const Matrix g_t = g_ytr;
    Matrix g_s = (g_ytr.array() * lc.x_trans.array() * lc.exp_s.array()).matrix();
    g_s.rowwise() += g_logdet.transpose();
    const Matrix g_xtr = (g_ytr.array() * lc.exp_s.array()).matrix();
    Matrix g_xc = gather_rows(g_y, c.cond);
    if (!c.cond.empty()) {
      g_xc += net_backward(p, c.s, lc.x_cond, lc.s, g_s, grad);
      g_xc += net_backward(p, c.t, lc.x_cond, lc.t, g_t, grad);
    } else {
      net_backward(p, c.s, lc.x_cond, lc.s, g_s, grad);
      net_backward(p, c.t, lc.x_cond, lc.t, g_t, grad);
    }
    for (std::size_t i = 0; i < c.cond.size(); ++i) g.row(c.cond[i]) = g_xc.row(Eigen::Index(i));
    for (std::size_t i = 0; i < c.trans.size(); ++i) g.row(c.trans[i]) = g_xtr.row(Eigen::Index(i));
  }
}

/// Exact inverse of head_forward for one sample.
inline Vector head_inverse(const Vector& p, const HeadLayout& head, Vector z) {
  for (std::size_t li = head.layers.size(); li-- > 0;) {
    const CouplingLayout& c = head.layers[li];
    Vector y(head.width);
    for (int i = 0; i < head.width; ++i) y[c.perm[i]] = z[i];
    Matrix y_cond(Eigen::Index(c.cond.size()), 1);
    for (std::size_t i = 0; i < c.cond.size(); ++i) y_cond(Eigen::Index(i), 0) = y[c.cond[i]];
    NetCache s, t;
    net_forward(p, c.s, y_cond, s);
    net_forward(p, c.t, y_cond, t);
    for (std::size_t i = 0; i < c.trans.size(); ++i) {
      const auto k = Eigen::Index(i);
      y[c.trans[i]] = (y[c.trans[i]] - t.out(k, 0)) * std::exp(-s.out(k, 0));
    }
    z = y;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Squash between unbounded stack outputs and angle ranges.

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// log(sigmoid'(z)) = -softplus(z) - softplus(-z), evaluated stably.
inline double log_sigmoid_derivative(double z) {
  const double a = std::abs(z);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

inline double squash(const std::array<double, 2>& range, double z) {
  return range[0] + (range[1] - range[0]) * sigmoid(z);
}

inline bool unsquash(const std::array<double, 2>& range, double angle, double& z) {
  const double u = (angle - range[0]) / (range[1] - range[0]);
  if (!(u > 0.0 && u < 1.0)) return false;
  z = std::log(u) - std::log1p(-u);
  return true;
}

// ---------------------------------------------------------------------------
// Spherical map y = S(angles) with r = 1 on column batches.

inline Matrix spherical_batch(const Matrix& angles) {
  const Eigen::Index n = angles.rows();
  Matrix y(n + 1, angles.cols());
  for (Eigen::Index c = 0; c < angles.cols(); ++c) {
    double prod = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i, c) = prod * std::cos(angles(i, c));
      prod *= std::sin(angles(i, c));
    }
    y(n, c) = prod;
  }
  return y;
}

/// dL/dangles = J_S^T dL/dy. Latitudes stay inside (margin, pi - margin),
/// so dividing by their sine is safe; the azimuth is handled directly.
inline Matrix spherical_backward(const Matrix& angles, const Matrix& y, const Matrix& g_y) {
  const Eigen::Index n = angles.rows();
  Matrix g(n, angles.cols());
  for (Eigen::Index c = 0; c < angles.cols(); ++c) {
    double prefix = 1.0;
    // suffix[i] = sum_{j>i} y_j g_j
    double suffix = 0.0;
    Vector suf(n + 1);
    for (Eigen::Index i = n; i >= 0; --i) {
      suf[i] = suffix;
      suffix += y(i, c) * g_y(i, c);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      const double s = std::sin(angles(k, c));
      const double co = std::cos(angles(k, c));
      if (k + 1 < n) {
        g(k, c) = -prefix * s * g_y(k, c) + (co / s) * suf[k];
      } else {
        g(k, c) = -prefix * s * g_y(k, c) + prefix * co * g_y(n, c);
      }
      prefix *= s;
    }
  }
  return g;
}

}  // namespace stackmanifold::flow
