#include "kldiff/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kldiff/parallel.hpp"
#include "kldiff/torus.hpp"
#include "kldiff/wrapped_normal.hpp"

namespace kldiff {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  double m4 = 0.0;   // central fourth moment
};

Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  Moments m;
  for (double v : x) m.mean += v;
  m.mean /= n;
  double s2 = 0.0;
  double s4 = 0.0;
  for (double v : x) {
    const double d = (v - m.mean) * (v - m.mean);
    s2 += d;
    s4 += d * d;
  }
  m.var = s2 / (n - 1.0);
  m.m4 = s4 / n;
  return m;
}

KernelCheckRow mean_row(double t, std::string name, double expected, const std::vector<double>& x) {
  const Moments m = moments(x);
  const double se = std::sqrt(m.var / static_cast<double>(x.size()));
  return {t, std::move(name), expected, m.mean, se, (m.mean - expected) / se};
}

KernelCheckRow var_row(double t, std::string name, double expected, const std::vector<double>& x) {
  const Moments m = moments(x);
  const double se = std::sqrt(std::max(m.m4 - m.var * m.var, 0.0) / static_cast<double>(x.size()));
  return {t, std::move(name), expected, m.var, se, (m.var - expected) / se};
}

double log_kernel(const NoisySample& s, const AtomArray& v_t, const AtomArray& v0, const KineticSchedule& sched) {
  const double c = sched.mu_coef(s.t);
  const double a = sched.alpha_v(s.t);
  const double s2v = sched.sigma2_v(s.t);
  WrappedNormalParams wn;
  wn.sigma2 = sched.sigma2_r(s.t);
  wn.period = 1.0;
  double lp = 0.0;
  for (Eigen::Index i = 0; i < v_t.rows(); ++i) {
    for (int d = 0; d < 3; ++d) {
      wn.mu = c * (v_t(i, d) + v0(i, d));
      lp += wn_logpdf(s.r_t(i, d), wn);
      const double e = v_t(i, d) - a * v0(i, d);
      lp -= e * e / (2.0 * s2v);
    }
  }
  return lp;
}

}  // namespace

double KernelCheckReport::max_abs_z() const {
  double z = 0.0;
  for (const auto& r : rows) z = std::max(z, std::abs(r.z));
  return z;
}

nlohmann::ordered_json KernelCheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_paths"] = n_paths;
  j["dt"] = dt;
  j["v0"] = v0;
  j["max_abs_z"] = max_abs_z();
  auto& arr = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    arr.push_back({{"t", r.t}, {"quantity", r.quantity}, {"expected", r.expected}, {"observed", r.observed},
                   {"se", r.se}, {"z", r.z}});
  return j;
}

KernelCheckReport kernel_check(const KineticSchedule& sched, std::span<const double> times, long n_traj, double dt,
                               double v0, std::uint64_t seed, int threads) {
  sched.validate();
  if (times.empty() || n_traj < 2 || !(dt > 0.0)) throw std::invalid_argument("kernel_check: bad arguments");
  std::vector<int> stop(times.size());
  for (size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0) || times[i] > sched.horizon) throw std::invalid_argument("kernel_check: t outside (0, T]");
    stop[i] = static_cast<int>(std::lround(times[i] / dt));
    if (stop[i] < 1) throw std::invalid_argument("kernel_check: t smaller than dt");
  }
  const int n_total = *std::max_element(stop.begin(), stop.end());
  const long n_paths = n_traj * 3;
  const size_t nt = times.size();
  // Recorded state per (time, path).
  std::vector<std::vector<double>> vs(nt, std::vector<double>(static_cast<size_t>(n_paths)));
  std::vector<std::vector<double>> rs(nt, std::vector<double>(static_cast<size_t>(n_paths)));

  const double g = sched.gamma;
  const double kick = std::sqrt(2.0 * g * dt);
  constexpr long kChunk = 1024;
  const int n_chunks = static_cast<int>((n_traj + kChunk - 1) / kChunk);
  parallel_for(n_chunks, threads, [&](int ci) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const long end = std::min(n_traj, (ci + 1) * kChunk);
    for (long tr = ci * kChunk; tr < end; ++tr) {
      Rng rng = make_stream(seed, static_cast<std::uint64_t>(tr));
      double v[3] = {v0, v0, v0};
      double r[3] = {0.0, 0.0, 0.0};
      for (int n = 1; n <= n_total; ++n) {
        for (int d = 0; d < 3; ++d) {
          const double vn = v[d] - g * v[d] * dt + kick * normal(rng);
          r[d] += 0.5 * (v[d] + vn) * dt;
          v[d] = vn;
        }
        for (size_t i = 0; i < nt; ++i) {
          if (stop[i] != n) continue;
          for (int d = 0; d < 3; ++d) {
            vs[i][static_cast<size_t>(tr * 3 + d)] = v[d];
            rs[i][static_cast<size_t>(tr * 3 + d)] = r[d];
          }
        }
      }
    }
  });

  KernelCheckReport rep;
  rep.n_paths = n_paths;
  rep.dt = dt;
  rep.v0 = v0;
  for (size_t i = 0; i < nt; ++i) {
    const double t = stop[i] * dt;
    const double c = sched.mu_coef(t);
    const double a = sched.alpha_v(t);
    const double s2v = sched.sigma2_v(t);
    const double s2r = sched.sigma2_r(t);
    const double m = c * (1.0 + a) * v0;
    const double s2 = s2r + c * c * s2v;
    std::vector<double> sin1(vs[i].size()), cos1(vs[i].size()), resid(vs[i].size());
    for (size_t p = 0; p < vs[i].size(); ++p) {
      // Circular statistics only see the wrapped position.
      const double x = kTwoPi * (wrap_unit_unchecked(rs[i][p]) - m);
      sin1[p] = std::sin(x);
      cos1[p] = 1.0 - std::cos(x);
      resid[p] = rs[i][p] - c * (vs[i][p] + v0);
    }
    rep.rows.push_back(mean_row(t, "v_mean", a * v0, vs[i]));
    rep.rows.push_back(var_row(t, "v_var", s2v, vs[i]));
    rep.rows.push_back(mean_row(t, "circ_mean_sin", 0.0, sin1));
    rep.rows.push_back(mean_row(t, "circ_var", -std::expm1(-2.0 * kPi * kPi * s2), cos1));
    rep.rows.push_back(mean_row(t, "resid_mean", 0.0, resid));
    rep.rows.push_back(var_row(t, "resid_var", s2r, resid));
  }
  return rep;
}

nlohmann::ordered_json ScoreCheckReport::to_json() const {
  return {{"n_draws", n_draws},
          {"max_rel_err_target", max_rel_err_target},
          {"max_rel_err_wn", max_rel_err_wn},
          {"max_abs_err_simplified", max_abs_err_simplified}};
}

ScoreCheckReport score_check(const KineticSchedule& sched, int n_draws, std::uint64_t seed) {
  sched.validate();
  if (n_draws < 1) throw std::invalid_argument("score_check: n_draws must be >= 1");
  ScoreCheckReport rep;
  rep.n_draws = n_draws;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double log_lo = std::log(sched.t_min);
  const double log_hi = std::log(sched.horizon);
  for (int n = 0; n < n_draws; ++n) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(n));
    const int k = 1 + static_cast<int>(uni(rng) * 4.0);
    const double t = std::exp(log_lo + uni(rng) * (log_hi - log_lo));
    AtomArray f0(k, 3);
    for (Eigen::Index i = 0; i < f0.size(); ++i) f0.data()[i] = uni(rng);
    const bool zero_v0 = (n % 2 == 0);
    const AtomArray v0 = zero_v0 ? AtomArray::Zero(k, 3) : sample_normal_atoms(k, false, rng);
    const NoisySample s = sample_transition(f0, v0, t, sched, false, rng);

    // Central differences in v_t; the step follows the narrowest scale of
    // the log kernel along v_t.
    const AtomArray target = target_score(s, v0, sched, false);
    const double c = sched.mu_coef(t);
    const double h = 1e-4 * std::min(sched.sigma_v(t), std::sqrt(sched.sigma2_r(t)) / c);
    AtomArray fd(k, 3);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (int d = 0; d < 3; ++d) {
        AtomArray vp = s.v_t, vm = s.v_t;
        vp(i, d) += h;
        vm(i, d) -= h;
        fd(i, d) = (log_kernel(s, vp, v0, sched) - log_kernel(s, vm, v0, sched)) / (2.0 * h);
      }
    }
    rep.max_rel_err_target = std::max(rep.max_rel_err_target, (target - fd).norm() / fd.norm());

    if (zero_v0) {
      const AtomArray simplified = assemble_score(coordinate_score_term(s, v0, sched, false), s.v_t, t, sched, {});
      for (Eigen::Index i = 0; i < target.size(); ++i) {
        const double scale = std::max(1.0, std::abs(target.data()[i]));
        rep.max_abs_err_simplified =
            std::max(rep.max_abs_err_simplified, std::abs(simplified.data()[i] - target.data()[i]) / scale);
      }
    }

    WrappedNormalParams wn;
    wn.period = (n % 3 == 0) ? 1.0 : kTwoPi;
    // Above ~0.5 period^2 the density is flat to machine precision and the
    // score is numerically zero.
    wn.sigma2 = std::exp(std::log(1e-3) + uni(rng) * (std::log(0.5) - std::log(1e-3))) * wn.period * wn.period;
    wn.mu = (uni(rng) - 0.5) * wn.period;
    constexpr int kPoints = 16;
    Vector an(kPoints), num(kPoints);
    const double hw = 1e-4 * std::sqrt(wn.sigma2);
    for (int q = 0; q < kPoints; ++q) {
      const double r = (uni(rng) - 0.5) * wn.period;
      an[q] = wn_score_mean(r, wn);
      WrappedNormalParams p = wn, m = wn;
      p.mu += hw;
      m.mu -= hw;
      num[q] = (wn_logpdf(r, p) - wn_logpdf(r, m)) / (2.0 * hw);
    }
    rep.max_rel_err_wn = std::max(rep.max_rel_err_wn, (an - num).norm() / num.norm());
  }
  return rep;
}

nlohmann::ordered_json PriorCheckReport::to_json() const {
  return {{"n", n},
          {"ks_stat", ks_stat},
          {"ks_pvalue", ks_pvalue},
          {"v_skew", v_skew},
          {"v_excess_kurtosis", v_excess_kurtosis}};
}

double ks_pvalue(double d, long n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

PriorCheckReport prior_check(const KineticSchedule& sched, int n, std::uint64_t seed) {
  sched.validate();
  if (n < 2) throw std::invalid_argument("prior_check: n must be >= 2");
  std::vector<double> f;
  std::vector<double> v;
  f.reserve(static_cast<size_t>(n) * 3);
  v.reserve(static_cast<size_t>(n) * 3);
  const AtomArray f0 = AtomArray::Constant(1, 3, 0.3);
  const AtomArray v0 = AtomArray::Zero(1, 3);
  for (int i = 0; i < n; ++i) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
    const NoisySample s = sample_transition(f0, v0, sched.horizon, sched, false, rng);
    for (int d = 0; d < 3; ++d) {
      f.push_back(s.f_t(0, d));
      v.push_back(s.v_t(0, d));
    }
  }
  PriorCheckReport rep;
  rep.n = n;
  std::sort(f.begin(), f.end());
  const double m = static_cast<double>(f.size());
  for (size_t i = 0; i < f.size(); ++i)
    rep.ks_stat = std::max({rep.ks_stat, (i + 1) / m - f[i], f[i] - i / m});
  rep.ks_pvalue = ks_pvalue(rep.ks_stat, static_cast<long>(f.size()));

  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= m;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= m;
  m3 /= m;
  m4 /= m;
  rep.v_skew = m3 / std::pow(m2, 1.5);
  rep.v_excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return rep;
}

}  // namespace kldiff
