#include "stackmanifold/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace sm = stackmanifold;
namespace hs = stackmanifold::harness;

namespace {

int cmd_train(const std::string& cfg_path, const std::string& out_override) {
  hs::ExperimentConfig cfg = hs::load_config(cfg_path);
  if (!out_override.empty()) cfg.out = out_override;
  const auto env = hs::make_env(cfg.env);
  const std::filesystem::path out(cfg.out);
  std::filesystem::create_directories(out);
  const int da = cfg.flow.dim_a > 0 ? cfg.flow.dim_a : int(env->leader_box().dim());
  const int db = cfg.flow.dim_b > 0 ? cfg.flow.dim_b : int(env->follower_box().dim());
  try {
    const hs::TrainedManifold t = hs::train_manifold(cfg.flow, da, db);
    sm::flow::save_model(t.model, (out / "model.bin").string());
    hs::write_text(out / "training_report.json", hs::training_summary(t).dump(2) + "\n");
    std::printf("trained D=%d dims %d+%d epochs=%d final_total=%.17g test_mean=%.6g seconds=%.1f\n", cfg.flow.D, da, db,
                t.report.epochs_run, t.report.total.empty() ? 0.0 : t.report.total.back(), t.report.test.mean, t.seconds);
    return 0;
  } catch (const sm::flow::TrainingDiverged& e) {
    hs::json j = hs::training_report_to_json(e.report());
    j["diverged_at_epoch"] = e.epoch();
    hs::write_text(out / "training_report.json", j.dump(2) + "\n");
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
}

int cmd_eval(const std::string& model_path, int n, std::uint64_t seed) {
  if (n < 1) throw sm::Error(sm::ErrorKind::InvalidArgument, "--n must be >= 1");
  const sm::flow::FlowModel m = sm::flow::load_model(model_path);
  sm::Rng rng(seed);
  const sm::Matrix X = sm::flow::sample_unit_box(m.dim_a() + m.dim_b(), n, rng);
  hs::json j = hs::reconstruction_to_json(sm::flow::reconstruction_stats(m, X));
  j["n"] = X.cols();
  j["D"] = m.D();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_run(const std::string& cfg_path, int trials, long long seed, int rounds, const std::string& out,
            const std::string& learner) {
  hs::ExperimentConfig cfg = hs::load_config(cfg_path);
  if (trials > 0) cfg.trials = trials;
  if (seed >= 0) cfg.seed = std::uint64_t(seed);
  if (rounds > 0) cfg.rounds = rounds;
  if (!out.empty()) cfg.out = out;
  if (!learner.empty()) cfg.learner = hs::parse_learner(learner);
  const hs::ExperimentResult r = hs::run_experiment(cfg);
  std::printf("%s/%s: V*=%.6f final mean cumulative regret %.6g over %d trials (%d failed); per-round first 10%% %.4g, last 10%% %.4g; %.1fs\n",
              cfg.env.name.c_str(), hs::to_string(cfg.learner), r.certificate.value,
              r.curve.mean.empty() ? 0.0 : r.curve.mean.back(), r.curve.trials, r.failed, r.trend.first, r.trend.last,
              r.seconds);
  return r.failed_run() ? 3 : 0;
}

int cmd_equilibrium(const std::string& cfg_path, int res) {
  const hs::ExperimentConfig cfg = hs::load_config(cfg_path);
  const auto env = hs::make_env(cfg.env);
  const auto c = env->equilibrium(res > 0 ? res : hs::resolution(cfg));
  std::cout << hs::certificate_to_json(c, cfg.env).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stackelberg manifold learning experiments"};
  app.require_subcommand(1);

  std::string cfg_path, model_path, out, learner;
  int n = 1000, trials = 0, rounds = 0, res = 0;
  long long seed = -1;
  std::uint64_t eval_seed = 0;

  auto* train = app.add_subcommand("train-manifold", "Train a flow from the config's flow spec");
  train->add_option("config", cfg_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory (overrides config)");

  auto* eval = app.add_subcommand("eval-flow", "Reconstruction error on fresh uniform samples");
  eval->add_option("model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--n", n, "Number of samples");
  eval->add_option("--seed", eval_seed, "Sampling seed");

  auto* run = app.add_subcommand("run-experiment", "Monte-Carlo regret experiment");
  run->add_option("config", cfg_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--trials", trials, "Trials (overrides config)");
  run->add_option("--seed", seed, "Base seed (overrides config)");
  run->add_option("--rounds", rounds, "Rounds per trial (overrides config)");
  run->add_option("--out", out, "Output directory (overrides config)");
  run->add_option("--learner", learner, "gisa | dual-ucb | npg-baseline (overrides config)");

  auto* eq = app.add_subcommand("equilibrium", "Print the equilibrium certificate as JSON");
  eq->add_option("config", cfg_path, "Config file")->required()->check(CLI::ExistingFile);
  eq->add_option("--resolution", res, "Solver resolution (overrides config)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(cfg_path, out);
    if (*eval) return cmd_eval(model_path, n, eval_seed);
    if (*run) return cmd_run(cfg_path, trials, seed, rounds, out, learner);
    if (*eq) return cmd_equilibrium(cfg_path, res);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
