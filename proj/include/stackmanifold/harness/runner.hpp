#pragma once

#include "stackmanifold/baselines.hpp"
#include "stackmanifold/harness/config.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stackmanifold::harness {

/// Worker count: STACKMANIFOLD_THREADS if set and positive, otherwise the
/// hardware concurrency; never more than `jobs`.
inline int worker_count(int jobs) {
  int n = int(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STACKMANIFOLD_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  return std::clamp(n, 1, std::max(1, jobs));
}

/// Runs job(i) for i in [0, jobs) on a fixed pool. Jobs must write only to
/// their own slot; exceptions are the job's responsibility.
inline void parallel_for(int jobs, const std::function<void(int)>& job) {
  const int workers = worker_count(jobs);
  if (workers == 1) {
    for (int i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < jobs; i = next++) job(i);
    });
  for (auto& t : pool) t.join();
}

struct TrialResult {
  std::vector<double> cum_regret;  // length rounds when ok
  bool ok = false;
  std::string error;
};

/// Per-round Stackelberg regret: V* minus the leader's mean reward against a
/// best-responding follower.
inline double round_regret(const games::GameEnv& env, double v_star, const Vector& a) {
  return v_star - env.leader_value(a);
}

/// One trial of `cfg.learner`. The model is required for GISA only.
inline TrialResult run_trial(const ExperimentConfig& cfg, const games::GameEnv& env, double v_star,
                             const flow::FlowModel* model, int index) {
  TrialResult r;
  const std::uint64_t seed = cfg.seed + std::uint64_t(index);
  Rng rng(seed);
  r.cum_regret.reserve(std::size_t(cfg.rounds));
  double cum = 0.0;
  auto push = [&](const Vector& a) {
    cum += round_regret(env, v_star, a);
    r.cum_regret.push_back(cum);
  };
  try {
    switch (cfg.learner) {
      case Learner::Gisa: {
        if (!model) throw Error(ErrorKind::InvalidArgument, "gisa needs a flow model");
        gisa::GisaState s(*model, cfg.gisa);
        for (int t = 0; t < cfg.rounds; ++t) push(gisa::run_round(s, env, rng).a);
        break;
      }
      case Learner::DualUcb: {
        baselines::DualUcb s(env, cfg.ucb.arms, cfg.ucb.alpha, seed, cfg.ucb.conditioned);
        for (int t = 0; t < cfg.rounds; ++t) push(baselines::dual_ucb_round(s, env, rng).a);
        break;
      }
      case Learner::NpgBaseline: {
        const auto* npg = dynamic_cast<const games::NpgGame*>(&env);
        if (!npg) throw Error(ErrorKind::UnsupportedEnvironment, "npg-baseline only runs on the npg game");
        baselines::NpgBaselineState s;
        s.cfg = cfg.npg_baseline;
        for (int t = 0; t < cfg.rounds; ++t) push(baselines::npg_baseline_round(s, *npg, rng).sample.a);
        break;
      }
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    r.cum_regret.clear();
  }
  return r;
}

inline std::vector<TrialResult> run_trials(const ExperimentConfig& cfg, const games::GameEnv& env, double v_star,
                                           const flow::FlowModel* model) {
  std::vector<TrialResult> out(std::size_t(cfg.trials));
  parallel_for(cfg.trials, [&](int i) { out[std::size_t(i)] = run_trial(cfg, env, v_star, model, i); });
  return out;
}

struct AggregateCurve {
  std::vector<double> mean, q25, q75;
  int trials = 0;
};

/// Linearly interpolated quantile of sorted data (position q (n - 1)).
inline double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) throw Error(ErrorKind::InvalidArgument, "quantile of empty data");
  const double pos = q * double(s.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - double(lo)) * (s[hi] - s[lo]);
}

/// Ordered reduce over successful trials, in trial-index order.
inline AggregateCurve aggregate(const std::vector<TrialResult>& trials, int rounds) {
  AggregateCurve c;
  std::vector<const TrialResult*> ok;
  for (const auto& t : trials)
    if (t.ok) ok.push_back(&t);
  c.trials = int(ok.size());
  if (ok.empty()) return c;
  c.mean.resize(std::size_t(rounds));
  c.q25.resize(std::size_t(rounds));
  c.q75.resize(std::size_t(rounds));
  std::vector<double> col(ok.size());
  for (int t = 0; t < rounds; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < ok.size(); ++k) {
      col[k] = ok[k]->cum_regret[std::size_t(t)];
      sum += col[k];
    }
    c.mean[std::size_t(t)] = sum / double(ok.size());
    std::sort(col.begin(), col.end());
    c.q25[std::size_t(t)] = quantile_sorted(col, 0.25);
    c.q75[std::size_t(t)] = quantile_sorted(col, 0.75);
  }
  return c;
}

/// Mean per-round regret over the first and last `fraction` of rounds,
/// recovered from the mean cumulative curve.
struct RegretTrend {
  double first = 0.0, last = 0.0;
};

inline RegretTrend regret_trend(const AggregateCurve& c, double fraction = 0.1) {
  const int T = int(c.mean.size());
  if (T == 0) return {};
  const int w = std::max(1, int(std::floor(fraction * T)));
  const double at_w = c.mean[std::size_t(w - 1)];
  const double tail_start = T - w > 0 ? c.mean[std::size_t(T - w - 1)] : 0.0;
  return {at_w / w, (c.mean.back() - tail_start) / w};
}

}  // namespace stackmanifold::harness
