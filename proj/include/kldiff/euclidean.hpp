#pragma once

// Variance-preserving diffusion for the Euclidean channels: the encoded
// lattice 6-vector and the continuous atom-type encodings.

#include <array>
#include <span>
#include <vector>

#include "kldiff/rng.hpp"
#include "kldiff/types.hpp"

namespace kldiff {

/// Linear beta schedule on u in [0, 1]:
///   beta(u) = beta_min + (beta_max - beta_min) u,  B(u) = int_0^u beta.
/// alpha(u) = exp(-B/2), sigma(u)^2 = 1 - exp(-B).
struct VpSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  double beta(double u) const;
  double integral(double u) const;
  double alpha(double u) const;
  double sigma2(double u) const;
  double sigma(double u) const;

  void validate() const;
};

struct VpDraw {
  Vector x_t;
  Vector eps;
};

/// x_t = alpha(u) x0 + sigma(u) eps. Throws std::domain_error unless
/// 0 <= u <= 1.
VpDraw vp_sample(const Vector& x0, double u, const VpSchedule& sched, Rng& rng);

struct Lattice {
  std::array<double, 3> lengths{1.0, 1.0, 1.0};  // angstrom
  std::array<double, 3> angles{kHalfPi, kHalfPi, kHalfPi};  // radians, in (0, pi)

  static constexpr double kHalfPi = 1.5707963267948966;
};

/// (log a, log b, log c, tan(alpha - pi/2), tan(beta - pi/2), tan(gamma - pi/2)).
/// Throws std::domain_error for non-positive lengths or angles outside (0, pi).
Vec6 lattice_encode(const Lattice& lat);
/// Inverse of lattice_encode; throws std::domain_error on non-finite input.
Lattice lattice_decode(const Vec6& enc);

/// Per-coordinate affine standardization of encoded lattices.
struct Standardizer {
  Vec6 mean = Vec6::Zero();
  Vec6 scale = Vec6::Ones();

  /// Population mean/std; coordinates with std below `floor` keep scale 1.
  static Standardizer fit(std::span<const Vec6> samples, double floor = 1e-8);

  Vec6 apply(const Vec6& x) const { return (x - mean).cwiseQuotient(scale); }
  Vec6 invert(const Vec6& z) const { return z.cwiseProduct(scale) + mean; }
};

enum class OutputMode { Eps, X0 };

/// Converts a network output into an eps prediction. X0 mode returns
/// (x_t - alpha out) / sigma and throws std::domain_error when sigma(u) = 0.
Vector score_param_convert(const Vector& out, const Vector& x_t, double u, const VpSchedule& sched,
                           OutputMode mode);

enum class AtomTypeMode { OneHot, AnalogBits };

/// Channel count C: num_species for one-hot, max(1, ceil(log2 S)) bits otherwise.
int type_channels(AtomTypeMode mode, int num_species);

/// K x C clean encoding: one-hot rows or bits in {-1, +1} (least significant first).
RowMatrix encode_types(std::span<const int> species, int num_species, AtomTypeMode mode);

/// Argmax for one-hot; per-bit threshold at 0 for analog bits, clamped to
/// num_species - 1.
std::vector<int> decode_types(const RowMatrix& enc, int num_species, AtomTypeMode mode);

/// Loss weight for the type channel: 20 for one-hot, 1 for analog bits.
double type_loss_weight(AtomTypeMode mode);

}  // namespace kldiff
