#pragma once

#include "stackmanifold/harness/config.hpp"
#include "stackmanifold/harness/output.hpp"
#include "stackmanifold/harness/runner.hpp"

#include <chrono>
#include <filesystem>
#include <optional>

namespace stackmanifold::harness {

struct TrainedManifold {
  flow::FlowModel model;
  flow::TrainingReport report;
  double seconds = 0.0;
};

inline flow::FlowConfig flow_config(const FlowSpec& spec, int dim_a, int dim_b) {
  flow::FlowConfig fc;
  fc.D = spec.D;
  fc.dim_a = dim_a;
  fc.dim_b = dim_b;
  fc.layers = spec.layers;
  fc.hidden = spec.hidden;
  fc.seed = spec.seed;
  return fc;
}

/// Trains on uniform joint actions; training and held-out sets come from
/// one generator seeded by spec.seed. Throws flow::TrainingDiverged.
inline TrainedManifold train_manifold(const FlowSpec& spec, int dim_a, int dim_b) {
  if (spec.samples < 2 || spec.test_samples < 1) throw Error(ErrorKind::InvalidArgument, "need >= 2 samples and >= 1 test sample");
  const auto t0 = std::chrono::steady_clock::now();
  TrainedManifold out{flow::FlowModel(flow_config(spec, dim_a, dim_b)), {}, 0.0};
  Rng rng(spec.seed);
  const Matrix data = flow::sample_unit_box(dim_a + dim_b, spec.samples, rng);
  const Matrix test = flow::sample_unit_box(dim_a + dim_b, spec.test_samples, rng);
  out.report = flow::train(out.model, data, test, spec.loss, rng);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline json training_summary(const TrainedManifold& t) {
  json j = training_report_to_json(t.report);
  j["seconds"] = t.seconds;
  return j;
}

struct ExperimentResult {
  games::EquilibriumCertificate certificate;
  AggregateCurve curve;
  RegretTrend trend;
  std::vector<TrialResult> trials;
  int failed = 0;
  double seconds = 0.0;
  json report;

  /// More than 10% of trials failed.
  bool failed_run() const { return failed * 10 > int(trials.size()); }
};

/// Flow for GISA: loaded from spec.model, otherwise trained and saved into
/// `out` together with its training report.
inline flow::FlowModel prepare_model(const ExperimentConfig& cfg, const games::GameEnv& env,
                                     const std::filesystem::path& out, json* summary) {
  if (!cfg.flow.model.empty()) {
    flow::FlowModel m = flow::load_model(cfg.flow.model);
    if (m.dim_a() != env.leader_box().dim() || m.dim_b() != env.follower_box().dim())
      throw Error(ErrorKind::InvalidArgument, "model action dimensions do not match the env");
    if (summary) *summary = {{"model", cfg.flow.model}};
    return m;
  }
  const int da = int(env.leader_box().dim()), db = int(env.follower_box().dim());
  if ((cfg.flow.dim_a > 0 && cfg.flow.dim_a != da) || (cfg.flow.dim_b > 0 && cfg.flow.dim_b != db))
    throw Error(ErrorKind::InvalidArgument, "flow dimensions do not match the env");
  TrainedManifold t = train_manifold(cfg.flow, da, db);
  flow::save_model(t.model, (out / "model.bin").string());
  write_text(out / "training_report.json", training_summary(t).dump(2) + "\n");
  if (summary) *summary = {{"trained", true}, {"epochs", t.report.epochs_run}, {"final_total", t.report.total.empty() ? 0.0 : t.report.total.back()},
                           {"test_reconstruction_mean", t.report.test.mean}, {"seconds", t.seconds}};
  return std::move(t.model);
}

/// Runs all trials and writes config.json, certificate.json, regret.csv,
/// regret.svg and report.json into cfg.out. `model` overrides the flow spec.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const flow::FlowModel* model = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path out(cfg.out);
  std::filesystem::create_directories(out);
  write_text(out / "config.json", config_to_json(cfg).dump(2) + "\n");
  const auto env = make_env(cfg.env);

  ExperimentResult r;
  bool cached = false;
  r.certificate = cached_certificate(out, cfg.env, *env, resolution(cfg), &cached);

  std::optional<flow::FlowModel> owned;
  json flow_summary = nullptr;
  if (cfg.learner == Learner::Gisa && !model) {
    owned.emplace(prepare_model(cfg, *env, out, &flow_summary));
    model = &*owned;
  }

  r.trials = run_trials(cfg, *env, r.certificate.value, model);
  json failures = json::array();
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    if (!r.trials[i].ok) {
      ++r.failed;
      failures.push_back({{"trial", i}, {"seed", cfg.seed + i}, {"error", r.trials[i].error}});
    }
  }
  r.curve = aggregate(r.trials, cfg.rounds);
  r.trend = regret_trend(r.curve);
  write_text(out / "regret.csv", regret_csv(r.curve));
  write_text(out / "regret.svg",
             regret_svg({{to_string(cfg.learner), &r.curve, "#1f77b4"}}, cfg.env.name + ": cumulative Stackelberg regret"));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.report = {{"env", cfg.env.name},
              {"learner", to_string(cfg.learner)},
              {"rounds", cfg.rounds},
              {"trials", cfg.trials},
              {"succeeded", r.curve.trials},
              {"failed", r.failed},
              {"failures", failures},
              {"v_star", r.certificate.value},
              {"certificate_cached", cached},
              {"final_mean_cum_regret", r.curve.mean.empty() ? json(nullptr) : json(r.curve.mean.back())},
              {"first_decile_per_round", r.trend.first},
              {"last_decile_per_round", r.trend.last},
              {"flow", flow_summary},
              {"seconds", r.seconds}};
  write_text(out / "report.json", r.report.dump(2) + "\n");
  return r;
}

}  // namespace stackmanifold::harness
