#include "kldiff/kinetic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kldiff/torus.hpp"
#include "kldiff/wrapped_normal.hpp"

namespace kldiff {

namespace {

// sigma2_r for gamma = 1: 2t - 4 tanh(t/2). The two terms cancel to
// leading order, so small t uses the odd Taylor series (t^3/6 - ...).
double sigma2_r_unit(double t) {
  if (t < 0.5) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return t3 * (1.0 / 6.0 +
                 t2 * (-1.0 / 60.0 +
                       t2 * (17.0 / 10080.0 +
                             t2 * (-31.0 / 181440.0 + t2 * (691.0 / 39916800.0)))));
  }
  return 2.0 * t - 4.0 * std::tanh(0.5 * t);
}

void check_time(double t, const KineticSchedule& sched, const char* what) {
  if (!(t > 0.0) || t > sched.horizon * (1.0 + 1e-12))
    throw std::domain_error(std::string(what) + ": t must lie in (0, T]");
}

}  // namespace

double KineticSchedule::mu_coef(double t) const { return std::tanh(0.5 * gamma * t) / gamma; }

double KineticSchedule::sigma2_r(double t) const { return sigma2_r_unit(gamma * t) / (gamma * gamma); }

double KineticSchedule::alpha_v(double t) const { return std::exp(-gamma * t); }

double KineticSchedule::sigma2_v(double t) const { return -std::expm1(-2.0 * gamma * t); }

double KineticSchedule::sigma_v(double t) const { return std::sqrt(sigma2_v(t)); }

void KineticSchedule::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("schedule.gamma must be positive");
  if (!(horizon > 0.0)) throw ConfigError("schedule.horizon must be positive");
  if (n_steps < 1) throw ConfigError("schedule.n_steps must be >= 1");
  if (!(t_min > 0.0) || t_min >= horizon) throw ConfigError("schedule.t_min must lie in (0, T)");
}

AtomArray InitialVelocity::sample(Eigen::Index k, bool mean_free, Rng& rng) const {
  if (kind == Kind::Zero) return AtomArray::Zero(k, 3);
  AtomArray v = sample_normal_atoms(k, mean_free, rng);
  return v * std::sqrt(variance);
}

AtomArray project_mean_free(const AtomArray& v) {
  AtomArray out = v;
  project_mean_free_inplace(out);
  return out;
}

void project_mean_free_inplace(AtomArray& v) {
  if (v.rows() == 0) return;
  const Eigen::RowVector3d mean = v.colwise().mean();
  v.rowwise() -= mean;
}

AtomArray sample_normal_atoms(Eigen::Index k, bool mean_free, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  AtomArray x(k, 3);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int d = 0; d < 3; ++d) x(i, d) = normal(rng);
  if (mean_free) project_mean_free_inplace(x);
  return x;
}

NoisySample sample_transition(const AtomArray& f0, const AtomArray& v0, double t,
                              const KineticSchedule& sched, bool mean_free, Rng& rng) {
  check_time(t, sched, "sample_transition");
  if (f0.rows() != v0.rows()) throw std::invalid_argument("sample_transition: f0/v0 shape mismatch");
  const Eigen::Index k = f0.rows();

  NoisySample s;
  s.t = t;
  s.eps_v = sample_normal_atoms(k, mean_free, rng);
  s.v_t = sched.alpha_v(t) * v0 + sched.sigma_v(t) * s.eps_v;

  const AtomArray mu_r = sched.mu_coef(t) * (s.v_t + v0);
  const AtomArray eps_r = sample_normal_atoms(k, false, rng);
  s.r_t = mu_r + std::sqrt(sched.sigma2_r(t)) * eps_r;
  if (mean_free) project_mean_free_inplace(s.r_t);

  s.f_t.resize(k, 3);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int d = 0; d < 3; ++d) s.f_t(i, d) = wrap_unit_unchecked(f0(i, d) + s.r_t(i, d));
  return s;
}

AtomArray coordinate_score_term(const NoisySample& s, const AtomArray& v0,
                                const KineticSchedule& sched, bool mean_free) {
  check_time(s.t, sched, "coordinate_score_term");
  const double c = sched.mu_coef(s.t);
  WrappedNormalParams wn;
  wn.sigma2 = sched.sigma2_r(s.t);
  wn.period = 1.0;
  AtomArray out(s.r_t.rows(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (int d = 0; d < 3; ++d) {
      wn.mu = c * (s.v_t(i, d) + v0(i, d));
      out(i, d) = wn_score_mean(s.r_t(i, d), wn);
    }
  }
  if (mean_free) project_mean_free_inplace(out);
  return out;
}

AtomArray target_score(const NoisySample& s, const AtomArray& v0, const KineticSchedule& sched,
                       bool mean_free) {
  AtomArray out = sched.mu_coef(s.t) * coordinate_score_term(s, v0, sched, false);
  out -= s.eps_v / sched.sigma_v(s.t);
  if (mean_free) project_mean_free_inplace(out);
  return out;
}

AtomArray assemble_score(const AtomArray& net_out_f, const AtomArray& v_t, double t,
                         const KineticSchedule& sched, const InitialVelocity& v0_dist) {
  if (!v0_dist.is_zero())
    throw ConfigError("simplified score parameterization requires zero initial velocities");
  check_time(t, sched, "assemble_score");
  return sched.mu_coef(t) * net_out_f - v_t / sched.sigma2_v(t);
}

std::vector<ForwardSnapshot> simulate_forward(const AtomArray& f0, const AtomArray& v0, double t_end,
                                              int n_steps, const KineticSchedule& sched, Rng& rng,
                                              const ForwardOptions& opts) {
  if (n_steps < 1) throw std::domain_error("simulate_forward: n_steps must be >= 1");
  check_time(t_end, sched, "simulate_forward");
  if (f0.rows() != v0.rows()) throw std::invalid_argument("simulate_forward: f0/v0 shape mismatch");

  const Eigen::Index k = f0.rows();
  const double dt = t_end / n_steps;
  const double decay = sched.gamma * dt;
  const double kick = std::sqrt(2.0 * sched.gamma * dt);
  std::normal_distribution<double> normal(0.0, 1.0);

  AtomArray f(k, 3);
  for (Eigen::Index i = 0; i < k; ++i)
    for (int d = 0; d < 3; ++d) f(i, d) = wrap_unit_unchecked(f0(i, d));
  AtomArray v = v0;
  AtomArray noise = AtomArray::Zero(k, 3);

  std::vector<ForwardSnapshot> out;
  out.push_back({0.0, f, v});
  for (int n = 1; n <= n_steps; ++n) {
    if (opts.inject_noise) {
      for (Eigen::Index i = 0; i < k; ++i)
        for (int d = 0; d < 3; ++d) noise(i, d) = normal(rng);
      if (opts.mean_free) project_mean_free_inplace(noise);
    }
    for (Eigen::Index i = 0; i < k; ++i) {
      for (int d = 0; d < 3; ++d) {
        const double vi = v(i, d);
        f(i, d) = wrap_unit_unchecked(f(i, d) + vi * dt);
        v(i, d) = vi - decay * vi + kick * noise(i, d);
      }
    }
    const bool last = (n == n_steps);
    if (last || (opts.record_stride > 0 && n % opts.record_stride == 0))
      out.push_back({last ? t_end : n * dt, f, v});
  }
  return out;
}

}  // namespace kldiff
