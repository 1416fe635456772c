#pragma once

#include "stackmanifold/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace stackmanifold::optim {

struct ScalarResult {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Golden-section search for a maximum of f on [lo, hi]; stops once the
/// bracket is narrower than tol.
template <class F>
ScalarResult golden_section_max(F&& f, double lo, double hi, double tol = 1e-9, int max_iter = 200) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  int evals = 2;
  for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
    ++evals;
  }
  const double x = 0.5 * (a + b);
  ScalarResult r{x, f(x), evals + 1};
  // The bracket endpoints can beat the midpoint when the optimum sits on the boundary.
  for (double e : {lo, hi}) {
    if (std::abs(e - x) <= tol) {
      const double fe = f(e);
      if (fe > r.value) r = ScalarResult{e, fe, r.evaluations + 1};
    }
  }
  return r;
}

/// Uniform grid scan followed by golden-section refinement around the best
/// grid cell.
template <class F>
ScalarResult grid_golden_max(F&& f, double lo, double hi, int grid, double tol = 1e-9) {
  if (grid < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least two points");
  const double h = (hi - lo) / (grid - 1);
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double v = f(lo + h * i);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  const double a = std::max(lo, lo + h * (best - 1));
  const double b = std::min(hi, lo + h * (best + 1));
  ScalarResult r = golden_section_max(f, a, b, tol);
  r.evaluations += grid;
  if (best_v > r.value) r = ScalarResult{lo + h * best, best_v, r.evaluations};
  return r;
}

struct NelderMeadOptions {
  double initial_step = 0.1;
  double ftol = 1e-12;
  double xtol = 1e-10;
  int max_evaluations = 2000;
};

struct VectorResult {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
};

/// Nelder-Mead maximisation inside a box; trial points are clamped to the box.
template <class F>
VectorResult nelder_mead_max(F&& f, const Vector& x0, const Box& box, const NelderMeadOptions& opt = {}) {
  const Eigen::Index n = x0.size();
  std::vector<Vector> simplex(n + 1, box.clamp(x0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double span = box.hi[i] - box.lo[i];
    double step = opt.initial_step * (span > 0 ? span : 1.0);
    if (simplex[i + 1][i] + step > box.hi[i]) step = -step;
    simplex[i + 1][i] += step;
    simplex[i + 1] = box.clamp(simplex[i + 1]);
  }
  std::vector<double> vals(n + 1);
  int evals = 0;
  auto eval = [&](const Vector& x) {
    ++evals;
    return f(x);
  };
  for (Eigen::Index i = 0; i <= n; ++i) vals[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  while (evals < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double spread = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) spread = std::max(spread, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
    if (std::abs(vals[best] - vals[worst]) <= opt.ftol && spread <= opt.xtol) break;
    if (spread <= opt.xtol) break;

    Vector centroid = Vector::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i)
      if (static_cast<std::size_t>(i) != worst) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Vector xr = box.clamp(centroid + (centroid - simplex[worst]));
    const double fr = eval(xr);
    if (fr > vals[best]) {
      const Vector xe = box.clamp(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = eval(xe);
      if (fe > fr) {
        simplex[worst] = xe;
        vals[worst] = fe;
      } else {
        simplex[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr > vals[second]) {
      simplex[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr > vals[worst];
    const Vector xc = outside ? box.clamp(centroid + 0.5 * (xr - centroid))
                              : box.clamp(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(xc);
    if (fc > (outside ? fr : vals[worst])) {
      simplex[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (static_cast<std::size_t>(i) == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      vals[i] = eval(simplex[i]);
    }
  }
  const auto it = std::max_element(vals.begin(), vals.end());
  const auto idx = static_cast<std::size_t>(it - vals.begin());
  return VectorResult{simplex[idx], *it, evals};
}

}  // namespace stackmanifold::optim
