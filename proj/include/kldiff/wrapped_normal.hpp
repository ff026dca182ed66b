#pragma once

#include "kldiff/rng.hpp"
#include "kldiff/torus.hpp"

namespace kldiff {

/// Wrapped normal WN(mu, sigma2) on a circle of circumference `period`.
/// The density is the periodic sum of Gaussian bumps truncated to
/// k in [-k_trunc, k_trunc]. Angles use period 2pi; the kinetic process
/// uses period 1 on fractional coordinates.
struct WrappedNormalParams {
  double mu = 0.0;
  double sigma2 = 1.0;
  int k_trunc = 10;
  double period = kTwoPi;
};

struct WrappedNormalDraw {
  double r = 0.0;    // wrapped into [-period/2, period/2)
  double eps = 0.0;  // the standard normal draw behind r
};

/// r = wrap(mu + sqrt(sigma2) * eps), eps ~ N(0, 1).
WrappedNormalDraw wn_sample(const WrappedNormalParams& p, Rng& rng);

/// Log-density, evaluated with log-sum-exp. Throws std::domain_error when
/// sigma2 <= 0 or k_trunc < 1.
double wn_logpdf(double r, const WrappedNormalParams& p);

/// d/dmu of wn_logpdf: softmax-weighted mean of (r - mu + period*k) / sigma2.
double wn_score_mean(double r, const WrappedNormalParams& p);

}  // namespace kldiff
