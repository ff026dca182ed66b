#include "kldiff/wrapped_normal.hpp"

#include <cmath>
#include <stdexcept>

namespace kldiff {

namespace {

void check_density_params(const WrappedNormalParams& p) {
  if (!(p.sigma2 > 0.0)) throw std::domain_error("wrapped normal: sigma2 must be positive");
  if (p.k_trunc < 1) throw std::domain_error("wrapped normal: k_trunc must be >= 1");
  if (!(p.period > 0.0)) throw std::domain_error("wrapped normal: period must be positive");
}

}  // namespace

WrappedNormalDraw wn_sample(const WrappedNormalParams& p, Rng& rng) {
  if (p.sigma2 < 0.0) throw std::domain_error("wn_sample: negative variance");
  const double eps = standard_normal(rng);
  return {wrap_centered(p.mu + std::sqrt(p.sigma2) * eps, p.period), eps};
}

double wn_logpdf(double r, const WrappedNormalParams& p) {
  check_density_params(p);
  const double d = wrap_centered(r - p.mu, p.period);
  const double inv2s = 0.5 / p.sigma2;
  // k = 0 dominates since |d| <= period/2
  const double e0 = -d * d * inv2s;
  double acc = 0.0;
  for (int k = -p.k_trunc; k <= p.k_trunc; ++k) {
    const double x = d + p.period * k;
    acc += std::exp(-x * x * inv2s - e0);
  }
  return e0 + std::log(acc) - 0.5 * std::log(kTwoPi * p.sigma2);
}

double wn_score_mean(double r, const WrappedNormalParams& p) {
  check_density_params(p);
  const double d = wrap_centered(r - p.mu, p.period);
  const double inv2s = 0.5 / p.sigma2;
  const double e0 = -d * d * inv2s;
  double num = 0.0;
  double den = 0.0;
  for (int k = -p.k_trunc; k <= p.k_trunc; ++k) {
    const double x = d + p.period * k;
    const double wk = std::exp(-x * x * inv2s - e0);
    num += wk * x;
    den += wk;
  }
  return num / (den * p.sigma2);
}

}  // namespace kldiff
