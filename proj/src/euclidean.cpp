#include "kldiff/euclidean.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kldiff/torus.hpp"

namespace kldiff {

double VpSchedule::beta(double u) const { return beta_min + (beta_max - beta_min) * u; }

double VpSchedule::integral(double u) const {
  return beta_min * u + 0.5 * (beta_max - beta_min) * u * u;
}

double VpSchedule::alpha(double u) const { return std::exp(-0.5 * integral(u)); }

double VpSchedule::sigma2(double u) const { return -std::expm1(-integral(u)); }

double VpSchedule::sigma(double u) const { return std::sqrt(sigma2(u)); }

void VpSchedule::validate() const {
  if (!(beta_min > 0.0) || !(beta_max >= beta_min))
    throw ConfigError("vp schedule needs 0 < beta_min <= beta_max");
}

VpDraw vp_sample(const Vector& x0, double u, const VpSchedule& sched, Rng& rng) {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("vp_sample: u must lie in [0, 1]");
  std::normal_distribution<double> normal(0.0, 1.0);
  VpDraw d;
  d.eps.resize(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) d.eps[i] = normal(rng);
  d.x_t = sched.alpha(u) * x0 + sched.sigma(u) * d.eps;
  return d;
}

Vec6 lattice_encode(const Lattice& lat) {
  Vec6 enc;
  for (int i = 0; i < 3; ++i) {
    const double len = lat.lengths[i];
    const double ang = lat.angles[i];
    if (!(len > 0.0) || !std::isfinite(len)) throw std::domain_error("lattice_encode: length must be positive");
    if (!(ang > 0.0 && ang < kPi)) throw std::domain_error("lattice_encode: angle must lie in (0, pi)");
    enc[i] = std::log(len);
    enc[3 + i] = std::tan(ang - 0.5 * kPi);
  }
  return enc;
}

Lattice lattice_decode(const Vec6& enc) {
  if (!enc.allFinite()) throw std::domain_error("lattice_decode: non-finite encoding");
  Lattice lat;
  for (int i = 0; i < 3; ++i) {
    lat.lengths[i] = std::exp(enc[i]);
    lat.angles[i] = std::atan(enc[3 + i]) + 0.5 * kPi;
  }
  return lat;
}

Standardizer Standardizer::fit(std::span<const Vec6> samples, double floor) {
  Standardizer s;
  if (samples.empty()) return s;
  const double n = static_cast<double>(samples.size());
  Vec6 mean = Vec6::Zero();
  for (const auto& x : samples) mean += x;
  mean /= n;
  Vec6 var = Vec6::Zero();
  for (const auto& x : samples) var += (x - mean).cwiseAbs2();
  var /= n;
  s.mean = mean;
  for (int i = 0; i < 6; ++i) {
    const double sd = std::sqrt(var[i]);
    s.scale[i] = sd > floor ? sd : 1.0;
  }
  return s;
}

Vector score_param_convert(const Vector& out, const Vector& x_t, double u, const VpSchedule& sched,
                           OutputMode mode) {
  if (mode == OutputMode::Eps) return out;
  const double sigma = sched.sigma(u);
  if (!(sigma > 0.0)) throw std::domain_error("score_param_convert: x0 mode undefined at sigma = 0");
  return (x_t - sched.alpha(u) * out) / sigma;
}

int type_channels(AtomTypeMode mode, int num_species) {
  if (num_species < 1) throw ConfigError("num_species must be >= 1");
  if (mode == AtomTypeMode::OneHot) return num_species;
  int bits = 0;
  while ((1 << bits) < num_species) ++bits;
  return std::max(1, bits);
}

RowMatrix encode_types(std::span<const int> species, int num_species, AtomTypeMode mode) {
  const int c = type_channels(mode, num_species);
  const auto k = static_cast<Eigen::Index>(species.size());
  RowMatrix out(k, c);
  for (Eigen::Index i = 0; i < k; ++i) {
    const int s = species[i];
    if (s < 0 || s >= num_species) throw std::domain_error("encode_types: species index out of range");
    for (int b = 0; b < c; ++b) {
      if (mode == AtomTypeMode::OneHot)
        out(i, b) = (b == s) ? 1.0 : 0.0;
      else
        out(i, b) = ((s >> b) & 1) ? 1.0 : -1.0;
    }
  }
  return out;
}

std::vector<int> decode_types(const RowMatrix& enc, int num_species, AtomTypeMode mode) {
  std::vector<int> out(static_cast<size_t>(enc.rows()));
  for (Eigen::Index i = 0; i < enc.rows(); ++i) {
    int s = 0;
    if (mode == AtomTypeMode::OneHot) {
      enc.row(i).maxCoeff(&s);
    } else {
      for (Eigen::Index b = 0; b < enc.cols(); ++b)
        if (enc(i, b) > 0.0) s |= (1 << b);
    }
    out[static_cast<size_t>(i)] = std::min(s, num_species - 1);
  }
  return out;
}

double type_loss_weight(AtomTypeMode mode) { return mode == AtomTypeMode::OneHot ? 20.0 : 1.0; }

}  // namespace kldiff
