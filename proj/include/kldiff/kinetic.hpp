#pragma once

// Kinetic Langevin diffusion on the hypertorus of fractional coordinates.
//
// Positions f live on [0,1)^(K x 3) and are coupled to Euclidean velocities
// v on the Lie algebra:
//
//   df = v dt                              (exponential map: translate + wrap)
//   dv = -gamma v dt + sqrt(2 gamma) dW
//
// Displacements and velocities are measured in cell fractions (period 1),
// so the torus kernel of r = log(f0^-1 f_t) is a wrapped normal of period 1.

#include <vector>

#include "kldiff/rng.hpp"
#include "kldiff/types.hpp"

namespace kldiff {

/// Closed-form moments of the transition kernel
///   p(f_t, v_t | f_0, v_0) = WN(r_t | mu_r, sigma2_r) N(v_t | alpha_v v_0, sigma2_v).
struct KineticSchedule {
  double gamma = 1.0;
  double horizon = 2.0;  // T
  int n_steps = 1000;    // discrete grid on [0, T]
  double t_min = 1e-3;   // smallest time used for training

  /// Coefficient of (v_t + v_0) in mu_r; (1 - e^-t) / (1 + e^-t) for gamma = 1.
  double mu_coef(double t) const;
  /// 2t + 8 / (e^t + 1) - 4 for gamma = 1, evaluated without cancellation.
  double sigma2_r(double t) const;
  double alpha_v(double t) const;
  double sigma2_v(double t) const;
  double sigma_v(double t) const;

  double step() const { return horizon / n_steps; }
  double grid_time(int i) const { return horizon * static_cast<double>(i) / n_steps; }

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Distribution of v_0: a point mass at zero, or N(0, variance I).
struct InitialVelocity {
  enum class Kind { Zero, Gaussian };
  Kind kind = Kind::Zero;
  double variance = 0.0;

  bool is_zero() const { return kind == Kind::Zero; }
  /// Draws v_0 for K atoms; mean-projected when mean_free is set.
  AtomArray sample(Eigen::Index k, bool mean_free, Rng& rng) const;
};

struct NoisySample {
  AtomArray f_t;    // wrap(f_0 + r_t)
  AtomArray v_t;
  AtomArray r_t;    // unwrapped displacement; zero-sum per column in mean-free mode
  AtomArray eps_v;  // v_t = alpha_v v_0 + sigma_v eps_v
  double t = 0.0;
};

/// Subtracts the per-column mean over atoms.
AtomArray project_mean_free(const AtomArray& v);
void project_mean_free_inplace(AtomArray& v);

/// K x 3 standard normal draws, mean-projected when mean_free is set.
AtomArray sample_normal_atoms(Eigen::Index k, bool mean_free, Rng& rng);

/// Samples (f_t, v_t) from the closed-form kernel. v_t is drawn first, then
/// r_t ~ WN(mu_r(v_t, v_0), sigma2_r). Throws std::domain_error unless
/// 0 < t <= T.
NoisySample sample_transition(const AtomArray& f0, const AtomArray& v0, double t,
                              const KineticSchedule& sched, bool mean_free, Rng& rng);

/// grad_mu log WN(r_t | mu_r, sigma2_r) per component, mean-projected in
/// mean-free mode. This is the only unknown part of the velocity score.
AtomArray coordinate_score_term(const NoisySample& s, const AtomArray& v0,
                                const KineticSchedule& sched, bool mean_free);

/// Denoising target grad_{v_t} log p(f_t, v_t | f_0, v_0)
///   = mu_coef(t) * coordinate_score_term - eps_v / sigma_v(t).
AtomArray target_score(const NoisySample& s, const AtomArray& v0, const KineticSchedule& sched,
                       bool mean_free);

/// Simplified parameterization: mu_coef(t) * net_out_f - v_t / sigma2_v(t).
/// Only valid with zero initial velocities; throws ConfigError otherwise.
AtomArray assemble_score(const AtomArray& net_out_f, const AtomArray& v_t, double t,
                         const KineticSchedule& sched, const InitialVelocity& v0_dist);

struct ForwardOptions {
  bool inject_noise = true;  // false turns the SDE into the deterministic drift
  bool mean_free = false;    // project every noise increment
  int record_stride = 0;     // 0 records only the initial and final states
};

struct ForwardSnapshot {
  double t = 0.0;
  AtomArray f;
  AtomArray v;
};

/// Euler-Maruyama on v with a per-step wrapped position update
/// f <- wrap(f + v dt). Requires n_steps >= 1 and 0 < t_end <= T.
std::vector<ForwardSnapshot> simulate_forward(const AtomArray& f0, const AtomArray& v0, double t_end,
                                              int n_steps, const KineticSchedule& sched, Rng& rng,
                                              const ForwardOptions& opts = {});

}  // namespace kldiff
