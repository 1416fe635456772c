#pragma once

#include "stackmanifold/bandit.hpp"
#include "stackmanifold/baselines.hpp"
#include "stackmanifold/flow.hpp"
#include "stackmanifold/games.hpp"
#include "stackmanifold/gisa.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace stackmanifold::harness {

using json = nlohmann::ordered_json;

enum class Learner { Gisa, DualUcb, NpgBaseline };

inline const char* to_string(Learner l) {
  switch (l) {
    case Learner::Gisa: return "gisa";
    case Learner::DualUcb: return "dual-ucb";
    case Learner::NpgBaseline: return "npg-baseline";
  }
  return "?";
}

inline Learner parse_learner(const std::string& s) {
  if (s == "gisa") return Learner::Gisa;
  if (s == "dual-ucb") return Learner::DualUcb;
  if (s == "npg-baseline") return Learner::NpgBaseline;
  throw Error(ErrorKind::InvalidArgument, "unknown learner '" + s + "'");
}

/// Game selection plus parameters. Only the block matching `name` is used.
struct EnvConfig {
  std::string name = "r1";
  games::R1GameParams r1;
  games::NpgParams npg = games::NpgParams::with_default_boxes(1.0, 0.1, 0.1);
  games::SsgParams ssg;
};

/// Either a model file or a training spec. Training data are uniform joint
/// actions drawn from `seed`.
struct FlowSpec {
  std::string model;  // non-empty: load instead of training
  int D = 3;
  int dim_a = 0, dim_b = 0;  // 0: taken from the env's action boxes
  int layers = 2;
  int hidden = 16;
  std::uint64_t seed = 1;
  int samples = 1000;
  int test_samples = 200;
  flow::LossConfig loss;
};

struct UcbConfig {
  int arms = 200;
  double alpha = 0.01;
  bool conditioned = false;
};

struct ExperimentConfig {
  EnvConfig env;
  Learner learner = Learner::Gisa;
  int rounds = 2000;
  int trials = 100;
  std::uint64_t seed = 0;
  FlowSpec flow;
  gisa::GisaConfig gisa;
  UcbConfig ucb;
  baselines::NpgBaselineConfig npg_baseline;
  int equilibrium_resolution = 0;  // 0: per-game default
  std::string out = "out";

  void validate() const {
    if (trials < 1) throw Error(ErrorKind::InvalidArgument, "trials must be >= 1");
    if (rounds < 1) throw Error(ErrorKind::InvalidArgument, "rounds must be >= 1");
    if (learner == Learner::NpgBaseline && env.name != "npg")
      throw Error(ErrorKind::UnsupportedEnvironment, "npg-baseline only runs on the npg game");
    if (learner == Learner::Gisa && !flow.model.empty() && !std::filesystem::exists(flow.model))
      throw Error(ErrorKind::Io, "model file not found: " + flow.model);
    if (ucb.arms < 1 || !(ucb.alpha >= 0.0)) throw Error(ErrorKind::InvalidArgument, "bad ucb settings");
    gisa.schedule.validate();
    flow.loss.validate();
  }
};

inline int default_resolution(const std::string& env) {
  if (env == "r1") return 2000;
  if (env == "npg") return 100;
  return 2000;
}

inline int resolution(const ExperimentConfig& c) {
  return c.equilibrium_resolution > 0 ? c.equilibrium_resolution : default_resolution(c.env.name);
}

// ---------------------------------------------------------------------------
// JSON mapping. Missing keys keep their defaults; unknown keys are rejected so
// typos surface early.

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorKind::InvalidArgument, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline Vector to_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), Eigen::Index(v.size()));
}

inline json from_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline void get_pair(const json& j, const char* key, double& lo, double& hi) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw Error(ErrorKind::InvalidArgument, std::string(key) + " must be [lo, hi]");
  lo = v[0];
  hi = v[1];
}

}  // namespace detail

inline EnvConfig env_from_json(const json& j) {
  using namespace detail;
  EnvConfig e;
  e.name = j.value("name", e.name);
  if (e.name == "r1") {
    check_keys(j, {"name", "theta", "alpha", "sigma", "a_box", "b_box"}, "env");
    auto& p = e.r1;
    if (j.contains("theta")) {
      const auto t = j.at("theta").get<std::vector<double>>();
      if (t.size() != 3) throw Error(ErrorKind::InvalidArgument, "r1 theta needs 3 entries");
      p.theta1 = t[0], p.theta2 = t[1], p.theta3 = t[2];
    }
    if (j.contains("alpha")) {
      const auto a = j.at("alpha").get<std::vector<double>>();
      if (a.size() != 2) throw Error(ErrorKind::InvalidArgument, "r1 alpha needs 2 entries");
      p.alpha1 = a[0], p.alpha2 = a[1];
    }
    get_opt(j, "sigma", p.sigma);
    get_pair(j, "a_box", p.a_lo, p.a_hi);
    get_pair(j, "b_box", p.b_lo, p.b_hi);
    p.validate();
  } else if (e.name == "npg") {
    check_keys(j, {"name", "rho0", "rho1", "sigma", "a_box", "p_box", "b_box", "br_grid"}, "env");
    double rho0 = j.value("rho0", 1.0), rho1 = std::abs(j.value("rho1", 0.1)), sigma = j.value("sigma", 0.1);
    e.npg = games::NpgParams::with_default_boxes(rho0, rho1, sigma);
    auto& p = e.npg;
    get_pair(j, "a_box", p.a_lo, p.a_hi);
    get_pair(j, "p_box", p.p_lo, p.p_hi);
    get_pair(j, "b_box", p.b_lo, p.b_hi);
    get_opt(j, "br_grid", p.br_grid);
    p.validate();
  } else if (e.name == "ssg") {
    check_keys(j, {"name", "theta_a", "theta_b", "C_a", "C_b", "sigma", "box"}, "env");
    auto& p = e.ssg;
    if (j.contains("theta_a")) p.theta_a = to_vector(j.at("theta_a"));
    if (j.contains("theta_b")) p.theta_b = to_vector(j.at("theta_b"));
    get_opt(j, "C_a", p.C_a);
    get_opt(j, "C_b", p.C_b);
    get_opt(j, "sigma", p.sigma);
    get_pair(j, "box", p.lo, p.hi);
    p.validate();
  } else {
    throw Error(ErrorKind::UnsupportedEnvironment, "unknown env '" + e.name + "'");
  }
  return e;
}

inline json env_to_json(const EnvConfig& e) {
  using detail::from_vector;
  if (e.name == "r1") {
    const auto& p = e.r1;
    return {{"name", "r1"},
            {"theta", {p.theta1, p.theta2, p.theta3}},
            {"alpha", {p.alpha1, p.alpha2}},
            {"sigma", p.sigma},
            {"a_box", {p.a_lo, p.a_hi}},
            {"b_box", {p.b_lo, p.b_hi}}};
  }
  if (e.name == "npg") {
    const auto& p = e.npg;
    return {{"name", "npg"},           {"rho0", p.rho0},
            {"rho1", p.rho1},          {"sigma", p.sigma},
            {"a_box", {p.a_lo, p.a_hi}}, {"p_box", {p.p_lo, p.p_hi}},
            {"b_box", {p.b_lo, p.b_hi}}, {"br_grid", p.br_grid}};
  }
  const auto& p = e.ssg;
  return {{"name", "ssg"},  {"theta_a", from_vector(p.theta_a)}, {"theta_b", from_vector(p.theta_b)},
          {"C_a", p.C_a},   {"C_b", p.C_b},                      {"sigma", p.sigma},
          {"box", {p.lo, p.hi}}};
}

inline flow::LossConfig loss_from_json(const json& j, flow::LossConfig l) {
  using namespace detail;
  check_keys(j,
             {"alpha_n", "alpha_r", "alpha_l", "alpha_p", "C", "gamma_rep", "sigma_perturb", "lr", "epochs", "batch",
              "grad_clip", "lip_step"},
             "flow.loss");
  get_opt(j, "alpha_n", l.alpha_n);
  get_opt(j, "alpha_r", l.alpha_r);
  get_opt(j, "alpha_l", l.alpha_l);
  get_opt(j, "alpha_p", l.alpha_p);
  get_opt(j, "C", l.C);
  get_opt(j, "gamma_rep", l.gamma_rep);
  get_opt(j, "sigma_perturb", l.sigma_perturb);
  get_opt(j, "lr", l.lr);
  get_opt(j, "epochs", l.epochs);
  get_opt(j, "batch", l.batch);
  get_opt(j, "grad_clip", l.grad_clip);
  get_opt(j, "lip_step", l.lip_step);
  return l;
}

inline json loss_to_json(const flow::LossConfig& l) {
  return {{"alpha_n", l.alpha_n},     {"alpha_r", l.alpha_r},
          {"alpha_l", l.alpha_l},     {"alpha_p", l.alpha_p},
          {"C", l.C},                 {"gamma_rep", l.gamma_rep},
          {"sigma_perturb", l.sigma_perturb}, {"lr", l.lr},
          {"epochs", l.epochs},       {"batch", l.batch},
          {"grad_clip", l.grad_clip}, {"lip_step", l.lip_step}};
}

inline FlowSpec flow_from_json(const json& j) {
  using namespace detail;
  check_keys(j, {"model", "D", "dim_a", "dim_b", "layers", "hidden", "seed", "samples", "test_samples", "loss"}, "flow");
  FlowSpec f;
  get_opt(j, "model", f.model);
  get_opt(j, "D", f.D);
  get_opt(j, "dim_a", f.dim_a);
  get_opt(j, "dim_b", f.dim_b);
  get_opt(j, "layers", f.layers);
  get_opt(j, "hidden", f.hidden);
  get_opt(j, "seed", f.seed);
  get_opt(j, "samples", f.samples);
  get_opt(j, "test_samples", f.test_samples);
  f.loss.epochs = 1000;
  if (j.contains("loss")) f.loss = loss_from_json(j.at("loss"), f.loss);
  return f;
}

inline json flow_to_json(const FlowSpec& f) {
  return {{"model", f.model},     {"D", f.D},       {"dim_a", f.dim_a}, {"dim_b", f.dim_b}, {"layers", f.layers},
          {"hidden", f.hidden},   {"seed", f.seed}, {"samples", f.samples},
          {"test_samples", f.test_samples}, {"loss", loss_to_json(f.loss)}};
}

inline gisa::GisaConfig gisa_from_json(const json& j) {
  using namespace detail;
  check_keys(j, {"schedule", "c0", "delta", "floor", "cap", "lambda", "pullback", "pullback_grid"}, "gisa");
  gisa::GisaConfig g;
  g.schedule.kind = bandit::ScheduleKind::InverseSqrt;
  const std::string kind = j.value("schedule", std::string("inverse-sqrt"));
  if (kind == "ofu") g.schedule.kind = bandit::ScheduleKind::Ofu;
  else if (kind != "inverse-sqrt") throw Error(ErrorKind::InvalidArgument, "gisa.schedule must be ofu or inverse-sqrt");
  get_opt(j, "c0", g.schedule.c0);
  get_opt(j, "delta", g.schedule.delta);
  get_opt(j, "floor", g.schedule.floor);
  get_opt(j, "cap", g.schedule.cap);
  get_opt(j, "lambda", g.lambda_reg);
  const std::string pb = j.value("pullback", std::string("head-inverse"));
  if (pb == "nearest") g.pullback = gisa::Pullback::NearestOnImage;
  else if (pb != "head-inverse") throw Error(ErrorKind::InvalidArgument, "gisa.pullback must be head-inverse or nearest");
  get_opt(j, "pullback_grid", g.pullback_grid);
  return g;
}

inline json gisa_to_json(const gisa::GisaConfig& g) {
  return {{"schedule", g.schedule.kind == bandit::ScheduleKind::Ofu ? "ofu" : "inverse-sqrt"},
          {"c0", g.schedule.c0},
          {"delta", g.schedule.delta},
          {"floor", g.schedule.floor},
          {"cap", g.schedule.cap},
          {"lambda", g.lambda_reg},
          {"pullback", g.pullback == gisa::Pullback::NearestOnImage ? "nearest" : "head-inverse"},
          {"pullback_grid", g.pullback_grid}};
}

inline ExperimentConfig config_from_json(const json& j) {
  using namespace detail;
  check_keys(j,
             {"env", "learner", "rounds", "trials", "seed", "flow", "gisa", "ucb", "npg_baseline",
              "equilibrium_resolution", "out"},
             "config");
  ExperimentConfig c;
  c.gisa = gisa_from_json(json::object());
  c.flow = flow_from_json(json::object());
  if (j.contains("env")) c.env = env_from_json(j.at("env"));
  if (j.contains("learner")) c.learner = parse_learner(j.at("learner").get<std::string>());
  get_opt(j, "rounds", c.rounds);
  get_opt(j, "trials", c.trials);
  get_opt(j, "seed", c.seed);
  if (j.contains("flow")) c.flow = flow_from_json(j.at("flow"));
  if (j.contains("gisa")) c.gisa = gisa_from_json(j.at("gisa"));
  if (j.contains("ucb")) {
    const json& u = j.at("ucb");
    check_keys(u, {"arms", "alpha", "conditioned"}, "ucb");
    get_opt(u, "arms", c.ucb.arms);
    get_opt(u, "alpha", c.ucb.alpha);
    get_opt(u, "conditioned", c.ucb.conditioned);
  }
  if (j.contains("npg_baseline")) {
    const json& n = j.at("npg_baseline");
    check_keys(n, {"kappa", "leader_grid"}, "npg_baseline");
    get_opt(n, "kappa", c.npg_baseline.kappa);
    get_opt(n, "leader_grid", c.npg_baseline.leader_grid);
  }
  get_opt(j, "equilibrium_resolution", c.equilibrium_resolution);
  get_opt(j, "out", c.out);
  return c;
}

/// Full config with every default made explicit.
inline json config_to_json(const ExperimentConfig& c) {
  return {{"env", env_to_json(c.env)},
          {"learner", to_string(c.learner)},
          {"rounds", c.rounds},
          {"trials", c.trials},
          {"seed", c.seed},
          {"flow", flow_to_json(c.flow)},
          {"gisa", gisa_to_json(c.gisa)},
          {"ucb", {{"arms", c.ucb.arms}, {"alpha", c.ucb.alpha}, {"conditioned", c.ucb.conditioned}}},
          {"npg_baseline", {{"kappa", c.npg_baseline.kappa}, {"leader_grid", c.npg_baseline.leader_grid}}},
          {"equilibrium_resolution", resolution(c)},
          {"out", c.out}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

inline std::unique_ptr<games::GameEnv> make_env(const EnvConfig& e) {
  if (e.name == "r1") return std::make_unique<games::R1Game>(e.r1);
  if (e.name == "npg") return std::make_unique<games::NpgGame>(e.npg);
  if (e.name == "ssg") return std::make_unique<games::SsgGame>(e.ssg);
  throw Error(ErrorKind::UnsupportedEnvironment, "unknown env '" + e.name + "'");
}

}  // namespace stackmanifold::harness
