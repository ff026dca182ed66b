#include "kldiff/torus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace kldiff {

namespace {

double wrap_angle_raw(double x) noexcept {
  if (x >= -kPi && x < kPi) return x;
  double y = x - kTwoPi * std::floor((x + kPi) / kTwoPi);
  if (y >= kPi) y -= kTwoPi;
  if (y < -kPi) y += kTwoPi;
  return y;
}

}  // namespace

TorusAngle::TorusAngle(double radians) : theta_(wrap_angle_raw(radians)) {}

FracCoord::FracCoord(double fraction) : f_(wrap_unit_unchecked(fraction)) {}

double wrap_unit_unchecked(double x) noexcept {
  if (x >= 0.0 && x < 1.0) return x;
  double y = x - std::floor(x);
  // x slightly below an integer rounds up to exactly 1.0
  if (y >= 1.0) y = 0.0;
  return y;
}

FracCoord wrap_unit(double x) {
  if (!std::isfinite(x)) throw std::domain_error("wrap_unit: non-finite input");
  return FracCoord(x);
}

TorusAngle wrap_angle(double x) {
  if (!std::isfinite(x)) throw std::domain_error("wrap_angle: non-finite input");
  return TorusAngle(x);
}

double wrap_centered(double x, double period) noexcept {
  const double half = 0.5 * period;
  if (x >= -half && x < half) return x;
  double y = x - period * std::floor((x + half) / period);
  if (y >= half) y -= period;
  if (y < -half) y += period;
  return y;
}

TorusAngle frac_to_angle(FracCoord f) { return TorusAngle(kTwoPi * (f.value() - 0.5)); }

FracCoord angle_to_frac(TorusAngle theta) { return FracCoord(theta.value() / kTwoPi + 0.5); }

double torus_distance(TorusAngle a, TorusAngle b) noexcept {
  return std::abs(wrap_centered(a.value() - b.value(), kTwoPi));
}

double frac_distance(double a, double b) noexcept { return std::abs(wrap_centered(a - b, 1.0)); }

TorusAngle rotation_update(TorusAngle theta, double v, double dt) {
  return wrap_angle(theta.value() + v * dt);
}

FrechetResult frechet_mean(std::span<const TorusAngle> points,
                           std::optional<std::span<const double>> weights) {
  const std::size_t n = points.size();
  if (n == 0) throw std::domain_error("frechet_mean: empty point set");
  if (weights && weights->size() != n)
    throw std::domain_error("frechet_mean: weight count does not match point count");

  std::vector<double> w(n, 1.0);
  if (weights) std::copy(weights->begin(), weights->end(), w.begin());
  double total_w = 0.0;
  for (double wi : w) {
    if (!(wi >= 0.0) || !std::isfinite(wi)) throw std::domain_error("frechet_mean: invalid weight");
    total_w += wi;
  }
  if (!(total_w > 0.0)) throw std::domain_error("frechet_mean: total weight must be positive");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return points[a].value() < points[b].value(); });
  std::vector<double> s(n), ws(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = points[order[i]].value();
    ws[i] = w[order[i]];
  }

  auto cost_at = [&](double p) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = wrap_centered(s[i] - p, kTwoPi);
      c += ws[i] * d * d;
    }
    return c;
  };
  auto refine = [&](double p) {
    for (int it = 0; it < 100; ++it) {
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += ws[i] * wrap_centered(s[i] - p, kTwoPi);
      const double step = g / total_w;
      p = wrap_angle_raw(p + step);
      if (std::abs(step) < 1e-13) break;
    }
    return p;
  };

  // Cut c moves the c smallest points up by 2pi.
  double base = 0.0;
  for (std::size_t i = 0; i < n; ++i) base += ws[i] * s[i];

  struct Candidate {
    double mean;
    double cost;
  };
  std::vector<Candidate> candidates;
  double shifted = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double m = (base + kTwoPi * shifted) / total_w;
    const double lo = s[c];
    const double hi = (c == 0) ? s[n - 1] : s[c - 1] + kTwoPi;
    shifted += ws[c];
    // A stationary point needs every unwrapped point within pi of the mean.
    if (hi - m > kPi + 1e-12 || m - lo > kPi + 1e-12) continue;
    const double p = refine(wrap_angle_raw(m));
    candidates.push_back({p, cost_at(p)});
  }
  if (candidates.empty()) {
    // Numerically degenerate; fall back to refining every placement.
    shifted = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double p = refine(wrap_angle_raw((base + kTwoPi * shifted) / total_w));
      shifted += ws[c];
      candidates.push_back({p, cost_at(p)});
    }
  }

  const auto best = std::min_element(candidates.begin(), candidates.end(),
                                     [](const Candidate& a, const Candidate& b) { return a.cost < b.cost; });
  FrechetResult result{TorusAngle(best->mean), best->cost, true};
  for (const auto& c : candidates) {
    if (std::abs(c.cost - best->cost) < kFrechetTieTolerance &&
        torus_distance(TorusAngle(c.mean), result.mean) > 1e-6) {
      result.unique = false;
      break;
    }
  }
  return result;
}

FrechetResult frechet_mean(std::span<const double> radians) {
  std::vector<TorusAngle> pts;
  pts.reserve(radians.size());
  for (double r : radians) pts.push_back(wrap_angle(r));
  return frechet_mean(pts);
}

}  // namespace kldiff
