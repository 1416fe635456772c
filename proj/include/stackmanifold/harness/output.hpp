#pragma once

#include "stackmanifold/harness/config.hpp"
#include "stackmanifold/harness/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace stackmanifold::harness {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::string format_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* kCsvHeader = "round,mean_cum_regret,q25,q75,trials";

inline std::string regret_csv(const AggregateCurve& c) {
  std::string s = std::string(kCsvHeader) + "\n";
  for (std::size_t t = 0; t < c.mean.size(); ++t) {
    s += std::to_string(t + 1) + "," + format_full(c.mean[t]) + "," + format_full(c.q25[t]) + "," +
         format_full(c.q75[t]) + "," + std::to_string(c.trials) + "\n";
  }
  return s;
}

struct SvgSeries {
  std::string label;
  const AggregateCurve* curve = nullptr;
  std::string color = "#1f77b4";
};

/// Mean curve as a polyline over a translucent quartile band.
inline std::string regret_svg(const std::vector<SvgSeries>& series, const std::string& title) {
  const double W = 800, H = 500, left = 70, right = 20, top = 40, bottom = 50;
  std::size_t T = 1;
  double ymax = 0.0;
  for (const auto& s : series) {
    T = std::max(T, s.curve->mean.size());
    for (std::size_t t = 0; t < s.curve->mean.size(); ++t)
      ymax = std::max({ymax, s.curve->mean[t], s.curve->q75[t]});
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  auto px = [&](std::size_t t) { return left + (W - left - right) * (T > 1 ? double(t) / double(T - 1) : 0.5); };
  auto py = [&](double v) { return top + (H - top - bottom) * (1.0 - std::max(0.0, v) / ymax); };
  char buf[128];
  auto pt = [&](double x, double y) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
    return std::string(buf);
  };
  std::string s;
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", W, H);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(int(W / 2)) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + title + "</text>\n";
  // Axes with min/max tick labels.
  s += "<polyline fill=\"none\" stroke=\"black\" points=\"" + pt(left, top) + pt(left, H - bottom) + pt(W - right, H - bottom) + "\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"end\" font-size=\"12\">%.4g</text>\n", left - 5, top + 4, ymax);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"end\" font-size=\"12\">0</text>\n", left - 5, H - bottom + 4);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"end\" font-size=\"12\">%zu</text>\n", W - right, H - bottom + 18, T);
  s += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" text-anchor=\"middle\" font-size=\"12\">round</text>\n", (W + left) / 2, H - 12);
  s += buf;
  int row = 0;
  for (const auto& ser : series) {
    const AggregateCurve& c = *ser.curve;
    std::string band, line;
    for (std::size_t t = 0; t < c.mean.size(); ++t) band += pt(px(t), py(c.q75[t]));
    for (std::size_t t = c.mean.size(); t-- > 0;) band += pt(px(t), py(c.q25[t]));
    for (std::size_t t = 0; t < c.mean.size(); ++t) line += pt(px(t), py(c.mean[t]));
    s += "<polygon fill=\"" + ser.color + "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"" + band + "\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"1.5\" points=\"" + line + "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%.0f\" font-size=\"12\" fill=\"%s\">%s (n=%d)</text>\n", left + 10,
                  top + 16 + 16.0 * row++, ser.color.c_str(), ser.label.c_str(), c.trials);
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

// ---------------------------------------------------------------------------
// Equilibrium certificates. NaN residuals map to null.

inline json nan_to_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
inline double null_to_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline json certificate_to_json(const games::EquilibriumCertificate& c, const EnvConfig& env) {
  return {{"env", env_to_json(env)},
          {"a_star", detail::from_vector(c.a_star)},
          {"b_star", detail::from_vector(c.b_star)},
          {"value", c.value},
          {"method", c.method},
          {"resolution", c.resolution},
          {"foc_residual", nan_to_null(c.foc_residual)},
          {"inner_residual", nan_to_null(c.inner_residual)},
          {"start_dispersion", nan_to_null(c.start_dispersion)},
          {"constraint_activity", c.constraint_activity}};
}

inline games::EquilibriumCertificate certificate_from_json(const json& j) {
  games::EquilibriumCertificate c;
  c.a_star = detail::to_vector(j.at("a_star"));
  c.b_star = detail::to_vector(j.at("b_star"));
  c.value = j.at("value").get<double>();
  c.method = j.at("method").get<std::string>();
  c.resolution = j.at("resolution").get<int>();
  c.foc_residual = null_to_nan(j.at("foc_residual"));
  c.inner_residual = null_to_nan(j.at("inner_residual"));
  c.start_dispersion = null_to_nan(j.at("start_dispersion"));
  c.constraint_activity = j.at("constraint_activity").get<std::vector<int>>();
  return c;
}

/// Loads `dir`/certificate.json when it was computed for the same env and
/// resolution; otherwise solves and writes it.
inline games::EquilibriumCertificate cached_certificate(const std::filesystem::path& dir, const EnvConfig& env_cfg,
                                                        const games::GameEnv& env, int resolution, bool* from_cache = nullptr) {
  const auto path = dir / "certificate.json";
  if (from_cache) *from_cache = false;
  if (std::filesystem::exists(path)) {
    try {
      const json j = json::parse(read_text(path));
      if (j.at("env") == env_to_json(env_cfg) && j.at("resolution").get<int>() == resolution) {
        if (from_cache) *from_cache = true;
        return certificate_from_json(j);
      }
    } catch (const json::exception&) {
      // Unreadable cache: recompute below.
    }
  }
  const games::EquilibriumCertificate c = env.equilibrium(resolution);
  write_text(path, certificate_to_json(c, env_cfg).dump(2) + "\n");
  return c;
}

inline json reconstruction_to_json(const flow::ReconstructionStats& s) {
  return {{"mean", s.mean},           {"max", s.max},
          {"mean_a", s.mean_a},       {"mean_b", s.mean_b},
          {"stack_mean", s.stack_mean}, {"padding_residual", s.padding_residual}};
}

inline json training_report_to_json(const flow::TrainingReport& r) {
  return {{"epochs_run", r.epochs_run},
          {"nll", r.nll},
          {"repulsion", r.repulsion},
          {"lipschitz", r.lipschitz},
          {"perturbation", r.perturbation},
          {"total", r.total},
          {"test", reconstruction_to_json(r.test)}};
}

}  // namespace stackmanifold::harness
