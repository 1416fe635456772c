#pragma once

#include "stackmanifold/common.hpp"
#include "stackmanifold/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace stackmanifold::games {

/// Euclidean projection onto {x : sum_i |w_i x_i| <= C} by the sorted
/// threshold rule x_i = sign(y_i) max(|y_i| - tau |w_i|, 0).
inline Vector project_weighted_l1(const Vector& y, const Vector& w, double C) {
  if (y.size() != w.size()) throw Error(ErrorKind::InvalidArgument, "projection: dimension mismatch");
  if (!(C >= 0.0)) throw Error(ErrorKind::InvalidArgument, "projection: budget must be >= 0");
  const Vector aw = w.cwiseAbs();
  if (aw.dot(y.cwiseAbs()) <= C) return y;
  // Breakpoints tau_i = |y_i| / |w_i|; g(tau) = sum |w_i| max(|y_i| - tau |w_i|, 0) is decreasing.
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (aw[i] > 0.0) idx.push_back(i);
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::abs(y[a]) / aw[a] > std::abs(y[b]) / aw[b]; });
  double sum_wy = 0.0, sum_w2 = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Eigen::Index i = idx[k];
    sum_wy += aw[i] * std::abs(y[i]);
    sum_w2 += aw[i] * aw[i];
    const double t = (sum_wy - C) / sum_w2;
    const double next = k + 1 < idx.size() ? std::abs(y[idx[k + 1]]) / aw[idx[k + 1]] : 0.0;
    tau = t;
    if (t >= next) break;
  }
  Vector x = y;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (aw[i] == 0.0) continue;
    const double mag = std::max(std::abs(y[i]) - tau * aw[i], 0.0);
    x[i] = std::copysign(mag, y[i]);
  }
  return x;
}

inline double weighted_l1(const Vector& x, const Vector& w) { return w.cwiseAbs().dot(x.cwiseAbs()); }

/// maximise sum_i (lin_i x_i + quad_i x_i^2)
/// s.t. sum_i |w_i x_i| <= C, lo <= x <= hi (the box contains 0).
struct SeparableQuadratic {
  Vector lin, quad, w;
  double C = 1.0;
  Box box;

  double value(const Vector& x) const { return lin.dot(x) + quad.dot(x.cwiseProduct(x)); }
  double coord_value(Eigen::Index i, double x) const { return lin[i] * x + quad[i] * x * x; }

  /// Best x_i with |w_i x_i| <= c.
  double coord_argmax(Eigen::Index i, double c) const {
    double lo = box.lo[i], hi = box.hi[i];
    if (std::abs(w[i]) > 0.0) {
      const double r = c / std::abs(w[i]);
      lo = std::max(lo, -r);
      hi = std::min(hi, r);
    }
    double best = 0.0, best_v = 0.0;  // x = 0 is always feasible
    auto consider = [&](double x) {
      const double v = coord_value(i, x);
      if (v > best_v || (v == best_v && std::abs(x) < std::abs(best))) {
        best = x;
        best_v = v;
      }
    };
    consider(lo);
    consider(hi);
    if (quad[i] < 0.0) {
      const double vtx = -lin[i] / (2.0 * quad[i]);
      if (vtx > lo && vtx < hi) consider(vtx);
    }
    return best;
  }
  double coord_best(Eigen::Index i, double c) const { return coord_value(i, coord_argmax(i, c)); }
};

struct SeparableSolution {
  Vector x;
  double value = 0.0;
  bool budget_active = false;
};

/// Exact per-coordinate values combined by a dynamic programme over a
/// budget grid of `levels` steps, then polished by golden-section transfers
/// of budget between coordinate pairs.
inline SeparableSolution solve_separable(const SeparableQuadratic& q, int levels = 2000) {
  const Eigen::Index n = q.lin.size();
  if (q.quad.size() != n || q.w.size() != n || q.box.dim() != n)
    throw Error(ErrorKind::InvalidArgument, "separable problem: dimension mismatch");
  if (!(q.C >= 0.0)) throw Error(ErrorKind::InvalidArgument, "separable problem: negative budget");
  if (levels < 1) throw Error(ErrorKind::InvalidArgument, "separable problem: levels must be >= 1");

  const double step = q.C / levels;
  const auto L = std::size_t(levels) + 1;
  std::vector<double> best(L, 0.0), next(L);
  std::vector<std::vector<std::size_t>> choice(std::size_t(n), std::vector<std::size_t>(L, 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> vi(L);
    for (std::size_t k = 0; k < L; ++k) vi[k] = q.coord_best(i, step * double(k));
    for (std::size_t total = 0; total < L; ++total) {
      double bv = -std::numeric_limits<double>::infinity();
      std::size_t bk = 0;
      for (std::size_t k = 0; k <= total; ++k) {
        const double v = best[total - k] + vi[k];
        if (v > bv) {
          bv = v;
          bk = k;
        }
      }
      next[total] = bv;
      choice[std::size_t(i)][total] = bk;
    }
    best.swap(next);
  }
  Vector budget(n);
  std::size_t rem = L - 1;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const std::size_t k = choice[std::size_t(i)][rem];
    budget[i] = step * double(k);
    rem -= k;
  }
  // Polishing may hand out budget the grid left unused.
  double slack = q.C - budget.sum();
  for (int sweep = 0; sweep < 4; ++sweep) {
    for (Eigen::Index i = 0; i < n; ++i) {
      // Give coordinate i any spare budget.
      if (slack > 0.0) {
        const double base = budget[i];
        auto f = [&](double add) { return q.coord_best(i, base + add); };
        const auto r = optim::golden_section_max(f, 0.0, slack, 1e-13);
        if (r.value > f(0.0)) {
          budget[i] += r.x;
          slack -= r.x;
        }
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double ci = budget[i], cj = budget[j];
        auto f = [&](double s) { return q.coord_best(i, ci + s) + q.coord_best(j, cj - s); };
        const auto r = optim::golden_section_max(f, -ci, cj, 1e-13);
        if (r.value > f(0.0)) {
          budget[i] = ci + r.x;
          budget[j] = cj - r.x;
        }
      }
    }
  }
  SeparableSolution s;
  s.x.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.x[i] = q.coord_argmax(i, std::max(0.0, budget[i]));
  // Guard against round-off pushing the budget a hair over C.
  if (weighted_l1(s.x, q.w) > q.C) s.x = project_weighted_l1(s.x, q.w, q.C);
  s.value = q.value(s.x);
  s.budget_active = weighted_l1(s.x, q.w) >= q.C * (1.0 - 1e-9);
  return s;
}

}  // namespace stackmanifold::games
