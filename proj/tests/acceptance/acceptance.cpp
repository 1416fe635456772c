// Acceptance criteria 1-10. Usage: acceptance [criterion ...]; no arguments
// runs all of them. Prints one PASS/FAIL line per criterion and exits nonzero
// if any failed.

#include "stackmanifold/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>

#include "../oracles.hpp"
#include "../test_support.hpp"

namespace sm = stackmanifold;
namespace hs = stackmanifold::harness;
namespace fs = std::filesystem;
using sm::Matrix;
using sm::Rng;
using sm::Vector;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector uniform(int n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

sm::flow::FlowConfig random_model_config(int D, int da, int db, std::uint64_t seed) {
  sm::flow::FlowConfig c;
  c.D = D;
  c.dim_a = da;
  c.dim_b = db;
  c.layers = 2;
  c.hidden = 8;
  c.seed = seed;
  c.init_scale = 0.5;
  return c;
}

// 1. Spherical round trip.
Verdict geometry_round_trip() {
  Rng rng(1);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const int D = 3 + k % 8;
    const Vector ang = oracles::random_angles(D, rng);
    const Vector back = sm::geometry::cartesian_to_spherical(sm::geometry::spherical_to_cartesian(ang)).angles;
    for (int i = 0; i < D - 1; ++i) {
      double d = std::abs(back[i] - ang[i]);
      if (i == D - 2) d = std::min(d, sm::kTwoPi - d);  // azimuth is periodic
      worst = std::max(worst, d);
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 5.0, fmt("1e5 tuples, D in 3..10: max error %.3g (< 1e-9), %.2fs (< 5s)", worst, secs)};
}

// 2. Layer-wise inverse and the trained D=4 model.
Verdict flow_invertibility() {
  Rng rng(2);
  double layer_worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const sm::flow::FlowModel m(random_model_config(4 + trial % 6, 1 + trial % 3, 1 + trial % 4, 100 + std::uint64_t(trial)));
    for (int h = 0; h < 2; ++h) {
      const sm::flow::HeadLayout& head = m.head(h);
      for (std::size_t l = 0; l < head.layers.size(); ++l) {
        sm::flow::HeadLayout one = head;
        one.layers = {head.layers[l]};
        const Vector x = uniform(head.width, rng, -2.0, 2.0);
        Vector ld = Vector::Zero(1);
        const Matrix z = sm::flow::head_forward(m.params(), one, Matrix(x), ld, nullptr);
        layer_worst = std::max(layer_worst, (sm::flow::head_inverse(m.params(), one, z.col(0)) - x).cwiseAbs().maxCoeff());
      }
    }
  }

  hs::FlowSpec spec;
  spec.D = 4;
  spec.layers = 2;
  spec.samples = 1000;
  spec.test_samples = 200;
  spec.loss.epochs = 20000;
  if (const char* e = std::getenv("STACKMANIFOLD_ACCEPT_EPOCHS")) spec.loss.epochs = std::atoi(e);
  const hs::TrainedManifold t = hs::train_manifold(spec, 2, 2);
  const double loss = t.report.total.back();
  const double minutes = t.seconds / 60.0 * 20000.0 / std::max(1, t.report.epochs_run);
  const bool loss_ok = loss >= 1.78e-8 && loss <= 1.78e-6;
  const bool pass = layer_worst < 1e-10 && t.report.test.mean <= 1e-2 && loss_ok && minutes <= 30.0;
  return {pass, fmt("layer-wise inverse %.3g (< 1e-10); D=4 2+2, %d epochs: held-out mean reconstruction %.4g (<= 1e-2), "
                    "final loss %.4g (nll %.4g; target within 10x of 1.78e-7), %.1f min (20000-epoch equivalent %.1f min, <= 30)",
                    layer_worst, t.report.epochs_run, t.report.test.mean, loss, t.report.nll.back(), t.seconds / 60.0, minutes)};
}

// 3. Analytic log-det against a finite-difference Jacobian.
Verdict logdet_correctness() {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int D = 3 + trial % 4;
    const sm::flow::FlowModel m(random_model_config(D, 1 + trial % 2, 1 + (trial / 2) % 3, 300 + std::uint64_t(trial)));
    const Vector a = uniform(m.dim_a(), rng), b = uniform(m.dim_b(), rng);
    const double fd = oracles::logdet_finite_difference(m, a, b);
    const double analytic = sm::flow::forward(m, a, b).logdet;
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
  }
  return {worst < 1e-4, fmt("50 random models, D in 3..6: max relative error %.3g (< 1e-4)", worst)};
}

// 4. Total-loss gradient against central differences.
Verdict loss_gradient() {
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    sm::flow::FlowModel m(random_model_config(4, 2, 2, 400 + std::uint64_t(trial)));
    const Matrix X = sm::flow::sample_unit_box(4, 12, rng);
    const Matrix E = sm::flow::gaussian_noise(4, 12, 0.05, rng);
    const sm::flow::LossConfig cfg;
    Vector g;
    sm::flow::evaluate_loss(m, X, E, cfg, &g);
    worst = std::max(worst, testing_support::relative_error(g, oracles::loss_gradient_fd(m, X, E, cfg)));
  }
  return {worst < 1e-4, fmt("2-layer toy, 20 weight settings: max relative error %.3g (< 1e-4)", worst)};
}

// 5. Noiseless ridge recovery.
Verdict estimator_consistency() {
  Rng rng(5);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int D = 2; D <= 10; ++D) {
    Vector theta(D);
    for (auto& x : theta) x = g(rng);
    sm::bandit::EstimatorState s(D, 1e-8);
    for (int k = 0; k < 50; ++k) {
      const Vector phi = sm::geometry::sample_sphere(D, rng);
      s.add(phi, theta.dot(phi));
    }
    worst = std::max(worst, (sm::bandit::solve_theta(s) - theta).norm());
  }
  return {worst < 1e-6, fmt("lambda 1e-8, 50 samples, D in 2..10: max error %.3g (< 1e-6)", worst)};
}

// 6. Simple regret under planted estimates.
Verdict regret_bound() {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  double worst_slack = -INFINITY;
  int violations = 0;
  for (double J : {0.05, 0.1, 0.3}) {
    const double rho = sm::geometry::cartesian_radius_to_geodesic(J);
    for (int k = 0; k < 1000; ++k) {
      const int D = 3 + k % 8;
      Vector theta_a(D), theta_b(D);
      for (auto& x : theta_a) x = g(rng);
      for (auto& x : theta_b) x = g(rng);
      const Vector xa = theta_a.normalized(), xb = theta_b.normalized();
      // Planted estimates at Cartesian distance <= J from the truth.
      const Vector ha = oracles::at_angle(xa, rho * u(rng), rng), hb = oracles::at_angle(xb, rho * u(rng), rng);
      const double sep = sm::geometry::geodesic_distance(ha, hb);
      const Vector played = sm::gisa::choose_phase(sep, rho) == sm::gisa::Phase::Phase2
                                ? sm::gisa::phase2_action(ha, hb, rho)
                                : sm::gisa::phase1_action(ha, rho, rng);
      const double gap = sm::bandit::simple_regret_linear(theta_a, xa, played);
      const double bound = sm::bandit::simple_regret_bound(theta_a.norm(), J);
      worst_slack = std::max(worst_slack, gap - bound);
      if (gap > bound + 1e-9) ++violations;
    }
  }
  return {violations == 0, fmt("3 x 1000 instances, J in {0.05, 0.1, 0.3}: %d violations, max(gap - bound) %.3g", violations, worst_slack)};
}

// 7. Best-response oracles against dense grids.
Verdict best_response_oracles() {
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r1_gap = 0.0, ssg_gap = 0.0;
  for (int k = 0; k < 20; ++k) {
    sm::games::R1GameParams p;
    p.alpha1 = 0.2 + 2.0 * u(rng);
    p.alpha2 = 0.1 + 3.0 * u(rng);
    const double a = 10.0 * u(rng);
    auto f = [&](double b) { return sm::games::r1_mean(p, a, b).follower; };
    double grid_best = -INFINITY;
    for (int i = 0; i <= 1000000; ++i) grid_best = std::max(grid_best, f(p.b_lo + (p.b_hi - p.b_lo) * i / 1e6));
    r1_gap = std::max(r1_gap, std::abs(grid_best - f(sm::games::r1_follower_br(p, a).b)));
  }
  for (int k = 0; k < 20; ++k) {
    sm::games::SsgParams p;
    p.theta_a = (Vector(2) << 2 * u(rng) - 1, 2 * u(rng) - 1).finished();
    p.theta_b = (Vector(2) << 4 * u(rng) - 2, 4 * u(rng) - 2).finished();
    p.C_b = 0.1 + 1.4 * u(rng);
    const sm::games::SeparableQuadratic q = sm::games::ssg_follower_problem(p);
    ssg_gap = std::max(ssg_gap, std::abs(q.value(sm::games::ssg_follower_br(p).b) - oracles::constrained_oracle_2d(q)));
  }
  return {r1_gap < 1e-4 && ssg_gap < 1e-4,
          fmt("20 parameterizations each: R1 gap %.3g, SSG gap %.3g (both < 1e-4)", r1_gap, ssg_gap)};
}

// 8. Equilibrium oracles under resolution doubling.
Verdict equilibrium_stability() {
  std::string detail;
  bool pass = true;
  for (const char* name : {"r1", "npg", "ssg"}) {
    const auto env = hs::make_env(hs::env_from_json({{"name", name}}));
    const int r = hs::default_resolution(name);
    const auto c1 = env->equilibrium(r);
    const auto c2 = env->equilibrium(2 * r);
    const double dv = std::abs(c1.value - c2.value);
    pass = pass && dv < 1e-3;
    detail += fmt("%s dV* %.3g; ", name, dv);
    if (std::string(name) == "r1") {
      pass = pass && c2.foc_residual < 1e-6;
      detail += fmt("r1 FOC residual %.3g (< 1e-6); ", c2.foc_residual);
    }
  }
  return {pass, detail + "tolerance 1e-3"};
}

fs::path config_dir() { return fs::path(STACKMANIFOLD_CONFIG_DIR); }

// 9. GISA against dual-UCB on the first parameter set of each game.
Verdict regret_ordering() {
  bool pass = true;
  std::string detail;
  for (const char* game : {"r1", "npg", "ssg"}) {
    const auto t0 = std::chrono::steady_clock::now();
    hs::ExperimentConfig cfg = hs::load_config((config_dir() / (std::string(game) + ".json")).string());
    cfg.trials = 100;
    cfg.rounds = 2000;
    cfg.out = (fs::path("acceptance_out") / game / "gisa").string();
    const hs::ExperimentResult g = hs::run_experiment(cfg);
    cfg.learner = hs::Learner::DualUcb;
    cfg.out = (fs::path("acceptance_out") / game / "dual-ucb").string();
    const hs::ExperimentResult d = hs::run_experiment(cfg);
    const double secs = seconds_since(t0);
    const bool order = g.curve.mean.back() < d.curve.mean.back();
    const bool trend = g.trend.last < g.trend.first;
    const bool ok = order && trend && secs < 1200.0 && !g.failed_run() && !d.failed_run();
    pass = pass && ok;
    const std::string line = fmt("%s %s: GISA %.1f vs dual-UCB %.1f (%s); GISA per-round first 10%% %.4f, last 10%% %.4f (%s); %.0fs",
                                 game, ok ? "ok" : "FAILED", g.curve.mean.back(), d.curve.mean.back(),
                                 order ? "ordered" : "not ordered", g.trend.first, g.trend.last,
                                 trend ? "decreasing" : "not decreasing", secs);
    std::printf("    %s\n", line.c_str());
    std::fflush(stdout);
    detail += std::string(game) + (ok ? " ok; " : " failed; ");
  }
  return {pass, detail + "100 trials, T=2000"};
}

// 10. Byte-identical reruns.
Verdict determinism() {
  bool pass = true;
  std::string detail;
  for (const char* game : {"r1", "npg", "ssg"}) {
    for (auto learner : {hs::Learner::Gisa, hs::Learner::DualUcb}) {
      hs::ExperimentConfig cfg = hs::load_config((config_dir() / (std::string(game) + ".json")).string());
      cfg.learner = learner;
      cfg.trials = 8;
      cfg.rounds = 200;
      cfg.flow.loss.epochs = 20;
      std::string csv[2];
      for (int rep = 0; rep < 2; ++rep) {
        cfg.out = (fs::path("acceptance_out") / "determinism" / (std::string(game) + "_" + hs::to_string(learner) + "_" + std::to_string(rep))).string();
        fs::remove_all(cfg.out);
        if (rep == 1) setenv("STACKMANIFOLD_THREADS", "4", 1);
        hs::run_experiment(cfg);
        unsetenv("STACKMANIFOLD_THREADS");
        csv[rep] = hs::read_text(fs::path(cfg.out) / "regret.csv");
      }
      const bool same = csv[0] == csv[1] && !csv[0].empty();
      pass = pass && same;
      if (!same) detail += fmt("%s/%s differs; ", game, hs::to_string(learner));
    }
  }
  return {pass, detail + "3 games x {gisa, dual-ucb}, reruns with 1 and 4 workers compared byte for byte"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria = {
      {1, {"geometry round trip", geometry_round_trip}},
      {2, {"flow invertibility", flow_invertibility}},
      {3, {"log-det correctness", logdet_correctness}},
      {4, {"loss-gradient check", loss_gradient}},
      {5, {"estimator consistency", estimator_consistency}},
      {6, {"simple-regret bound", regret_bound}},
      {7, {"best-response oracles", best_response_oracles}},
      {8, {"equilibrium stability", equilibrium_stability}},
      {9, {"regret ordering", regret_ordering}},
      {10, {"determinism", determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [k, v] : criteria) selected.push_back(k);

  int failed = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", k);
      return 2;
    }
    Verdict v;
    try {
      v = it->second.second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s: %s\n", k, it->second.first, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
