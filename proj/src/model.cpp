#include "kldiff/model.hpp"

#include <cmath>

namespace kldiff {

void ModelSpec::validate() const {
  sched.validate();
  vp.validate();
  net.validate();
  if (param == ScoreParam::Simplified && !v0.is_zero())
    throw ConfigError("the simplified score parameterization requires zero initial velocities");
  if (v0.kind == InitialVelocity::Kind::Gaussian && !(v0.variance > 0.0))
    throw ConfigError("Gaussian initial velocities need a positive variance");
  if (num_species < 1) throw ConfigError("num_species must be >= 1");
  if (net.type_channels != type_channels(type_mode, num_species))
    throw ConfigError("net.type_channels does not match the atom-type encoding");
}

ModelSpec::VelocityHead ModelSpec::velocity_head(double t) const {
  if (param == ScoreParam::Simplified)
    return {sched.mu_coef(t) / std::sqrt(sched.sigma2_r(t)), 1.0 / sched.sigma2_v(t)};
  return {1.0 / sched.sigma_v(t), 0.0};
}

std::string to_string(Task t) { return t == Task::CSP ? "csp" : "dng"; }
std::string to_string(ScoreParam p) { return p == ScoreParam::Simplified ? "simplified" : "direct"; }
std::string to_string(OutputMode m) { return m == OutputMode::Eps ? "eps" : "x0"; }
std::string to_string(AtomTypeMode m) { return m == AtomTypeMode::OneHot ? "one-hot" : "analog-bits"; }

Task parse_task(const std::string& s) {
  if (s == "csp") return Task::CSP;
  if (s == "dng") return Task::DNG;
  throw ConfigError("unknown task '" + s + "' (expected csp or dng)");
}

ScoreParam parse_score_param(const std::string& s) {
  if (s == "simplified") return ScoreParam::Simplified;
  if (s == "direct") return ScoreParam::Direct;
  throw ConfigError("unknown score parameterization '" + s + "' (expected simplified or direct)");
}

OutputMode parse_output_mode(const std::string& s) {
  if (s == "eps") return OutputMode::Eps;
  if (s == "x0") return OutputMode::X0;
  throw ConfigError("unknown lattice output mode '" + s + "' (expected eps or x0)");
}

AtomTypeMode parse_type_mode(const std::string& s) {
  if (s == "one-hot") return AtomTypeMode::OneHot;
  if (s == "analog-bits") return AtomTypeMode::AnalogBits;
  throw ConfigError("unknown atom-type mode '" + s + "' (expected one-hot or analog-bits)");
}

nlohmann::ordered_json ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["schedule"] = {{"gamma", sched.gamma}, {"horizon", sched.horizon}, {"n_steps", sched.n_steps}, {"t_min", sched.t_min}};
  j["vp"] = {{"beta_min", vp.beta_min}, {"beta_max", vp.beta_max}};
  j["net"] = net.to_json();
  j["param"] = to_string(param);
  j["v0_variance"] = v0.is_zero() ? 0.0 : v0.variance;
  j["mean_free"] = mean_free;
  j["lattice_mode"] = to_string(lattice_mode);
  j["standardize"] = standardize;
  j["stdz_mean"] = std::vector<double>(stdz.mean.data(), stdz.mean.data() + 6);
  j["stdz_scale"] = std::vector<double>(stdz.scale.data(), stdz.scale.data() + 6);
  j["task"] = to_string(task);
  j["type_mode"] = to_string(type_mode);
  j["num_species"] = num_species;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec m;
  const auto& s = j.at("schedule");
  m.sched.gamma = s.at("gamma").get<double>();
  m.sched.horizon = s.at("horizon").get<double>();
  m.sched.n_steps = s.at("n_steps").get<int>();
  m.sched.t_min = s.at("t_min").get<double>();
  m.vp.beta_min = j.at("vp").at("beta_min").get<double>();
  m.vp.beta_max = j.at("vp").at("beta_max").get<double>();
  m.net = NetConfig::from_json(j.at("net"));
  m.param = parse_score_param(j.at("param").get<std::string>());
  const double var = j.at("v0_variance").get<double>();
  if (var > 0.0) m.v0 = {InitialVelocity::Kind::Gaussian, var};
  m.mean_free = j.at("mean_free").get<bool>();
  m.lattice_mode = parse_output_mode(j.at("lattice_mode").get<std::string>());
  m.standardize = j.at("standardize").get<bool>();
  const auto mean = j.at("stdz_mean").get<std::vector<double>>();
  const auto scale = j.at("stdz_scale").get<std::vector<double>>();
  if (mean.size() != 6 || scale.size() != 6) throw std::runtime_error("model spec: standardizer needs 6 entries");
  for (int i = 0; i < 6; ++i) {
    m.stdz.mean[i] = mean[i];
    m.stdz.scale[i] = scale[i];
  }
  m.task = parse_task(j.at("task").get<std::string>());
  m.type_mode = parse_type_mode(j.at("type_mode").get<std::string>());
  m.num_species = j.at("num_species").get<int>();
  m.validate();
  return m;
}

}  // namespace kldiff
