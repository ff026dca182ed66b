#pragma once

#include "json.hpp"
#include "kldiff/euclidean.hpp"
#include "kldiff/kinetic.hpp"
#include "kldiff/score_net.hpp"

namespace kldiff {

enum class Task { CSP, DNG };

/// Everything a trained network needs to be interpreted at sampling time.
/// Stored verbatim in checkpoint headers.
struct ModelSpec {
  KineticSchedule sched;
  VpSchedule vp;
  NetConfig net;
  ScoreParam param = ScoreParam::Simplified;
  InitialVelocity v0;
  bool mean_free = true;
  OutputMode lattice_mode = OutputMode::Eps;
  bool standardize = true;
  Standardizer stdz;
  Task task = Task::CSP;
  AtomTypeMode type_mode = AtomTypeMode::OneHot;
  int num_species = 1;

  /// Throws ConfigError on inconsistent settings, e.g. the simplified
  /// parameterization with non-zero initial velocities.
  void validate() const;

  /// Network time input for diffusion time t.
  double net_time(double t) const { return t / sched.horizon; }

  /// Velocity score as head_scale * head - inv_sigma2_v * v at time t.
  /// Simplified: head_scale = mu_coef / sigma_r, so the head predicts the
  /// coordinate term in units of its natural scale 1 / sigma_r.
  /// Direct: head_scale = 1 / sigma_v and no closed-form part.
  struct VelocityHead {
    double head_scale = 1.0;
    double inv_sigma2_v = 0.0;
  };
  VelocityHead velocity_head(double t) const;

  nlohmann::ordered_json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

std::string to_string(Task t);
std::string to_string(ScoreParam p);
std::string to_string(OutputMode m);
std::string to_string(AtomTypeMode m);
Task parse_task(const std::string& s);
ScoreParam parse_score_param(const std::string& s);
OutputMode parse_output_mode(const std::string& s);
AtomTypeMode parse_type_mode(const std::string& s);

}  // namespace kldiff
