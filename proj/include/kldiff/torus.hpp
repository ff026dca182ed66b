#pragma once

// Geometry of the circle SO(2) ~ R/Z and of products of circles.
//
// Angles live in [-pi, pi) and fractional coordinates in [0, 1). Both are
// strong types whose constructors wrap, so every value that escapes this
// header already satisfies its range invariant.

#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace kldiff {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Angle on the circle, canonical range [-pi, pi).
class TorusAngle {
 public:
  constexpr TorusAngle() = default;
  explicit TorusAngle(double radians);

  double value() const noexcept { return theta_; }

  friend bool operator==(TorusAngle, TorusAngle) = default;

 private:
  double theta_ = 0.0;
};

/// Fractional coordinate, canonical range [0, 1).
class FracCoord {
 public:
  constexpr FracCoord() = default;
  explicit FracCoord(double fraction);

  double value() const noexcept { return f_; }

  friend bool operator==(FracCoord, FracCoord) = default;

 private:
  double f_ = 0.0;
};

/// x - floor(x), clamped so that the result is strictly below 1.
/// Throws std::domain_error for non-finite input.
FracCoord wrap_unit(double x);

/// Same as wrap_unit, as a plain double; no finiteness check.
double wrap_unit_unchecked(double x) noexcept;

/// Wraps into [-pi, pi). Throws std::domain_error for non-finite input.
TorusAngle wrap_angle(double x);

/// Wraps x into [-period/2, period/2).
double wrap_centered(double x, double period) noexcept;

TorusAngle frac_to_angle(FracCoord f);
FracCoord angle_to_frac(TorusAngle theta);

/// Geodesic distance on the unit-circumference-2pi circle, in [0, pi].
double torus_distance(TorusAngle a, TorusAngle b) noexcept;

/// Geodesic distance between two fractional coordinates, in [0, 1/2].
double frac_distance(double a, double b) noexcept;

/// Position update along a constant Lie-algebra velocity. Equivalent to
/// R(theta) * expm(skew(v * dt)) on rotation matrices, which reduces to a
/// translation followed by a wrap.
TorusAngle rotation_update(TorusAngle theta, double v, double dt);

struct FrechetResult {
  TorusAngle mean;
  double cost = 0.0;    // weighted sum of squared geodesic distances
  bool unique = true;   // false when another minimizer ties within tolerance
};

inline constexpr double kFrechetTieTolerance = 1e-9;

/// Karcher/Frechet mean on the circle. Every local minimizer of the
/// piecewise-quadratic objective is the weighted arithmetic mean of one
/// unwrapping of the sorted points (one per branch-cut placement); all of
/// them are evaluated, refined, and the cheapest is returned.
/// Throws std::domain_error on empty input, on a weight/point size
/// mismatch, or on non-positive total weight.
FrechetResult frechet_mean(std::span<const TorusAngle> points,
                           std::optional<std::span<const double>> weights = std::nullopt);

/// Convenience overload on raw radians.
FrechetResult frechet_mean(std::span<const double> radians);

}  // namespace kldiff
