#pragma once

// Numerical self-checks of the forward process: Monte Carlo against the
// closed-form kernel, finite differences against analytic scores, and the
// limiting prior at t = T. Shared by the CLI and the acceptance suite.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kldiff/kinetic.hpp"

namespace kldiff {

struct KernelCheckRow {
  double t = 0.0;
  std::string quantity;
  double expected = 0.0;
  double observed = 0.0;
  double se = 0.0;  // standard error of `observed`
  double z = 0.0;
};

struct KernelCheckReport {
  long n_paths = 0;  // scalar paths: trajectories x 3 pooled dimensions
  double dt = 0.0;
  double v0 = 0.0;
  std::vector<KernelCheckRow> rows;

  double max_abs_z() const;
  nlohmann::ordered_json to_json() const;
};

/// Simulates n_traj single-atom trajectories of the forward SDE with step dt
/// (trapezoidal position update) from f = 0, v = v0 in every dimension and
/// compares, at each requested time, the empirical moments with the
/// closed-form kernel:
///   v_mean, v_var            N(alpha_v v0, sigma2_v)
///   circ_mean_sin, circ_var  E sin, 1 - E cos of 2 pi (r - E r) on the period-1 circle
///   resid_mean, resid_var    r - mu_coef (v_t + v0) ~ N(0, sigma2_r) (unwrapped r)
/// Deterministic for a given seed regardless of `threads`.
KernelCheckReport kernel_check(const KineticSchedule& sched, std::span<const double> times, long n_traj, double dt,
                               double v0, std::uint64_t seed, int threads = 1);

struct ScoreCheckReport {
  int n_draws = 0;
  double max_rel_err_target = 0.0;      // target score vs FD of the log kernel in v_t
  double max_rel_err_wn = 0.0;          // wn_score_mean vs FD of wn_logpdf in mu
  double max_abs_err_simplified = 0.0;  // simplified assembly vs full target, scaled by max(1, |target|)

  nlohmann::ordered_json to_json() const;
};

/// Random draws of (K, t, v0, f0) with mean_free off. Relative errors are
/// norm-wise per draw: |a - b| / |b|.
ScoreCheckReport score_check(const KineticSchedule& sched, int n_draws, std::uint64_t seed);

struct PriorCheckReport {
  int n = 0;
  double ks_stat = 0.0;
  double ks_pvalue = 0.0;
  double v_skew = 0.0;
  double v_excess_kurtosis = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Asymptotic Kolmogorov distribution tail with Stephens' finite-n correction.
double ks_pvalue(double d, long n);

/// n single-atom draws from the kernel at t = T with v0 = 0; all three
/// coordinates are pooled for the uniformity test and the velocity moments.
PriorCheckReport prior_check(const KineticSchedule& sched, int n, std::uint64_t seed);

}  // namespace kldiff
