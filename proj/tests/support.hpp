#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kldiff/kinetic.hpp"
#include "kldiff/rng.hpp"
#include "kldiff/score_net.hpp"
#include "kldiff/torus.hpp"

namespace kldiff::testing {

inline GraphBatch random_batch(const NetConfig& cfg, const std::vector<int>& sizes, Rng& rng) {
  GraphBatch b;
  b.sizes = sizes;
  const int n = std::accumulate(sizes.begin(), sizes.end(), 0);
  const int g = static_cast<int>(sizes.size());
  b.f.resize(n, 3);
  b.v.resize(n, 3);
  b.a.resize(n, cfg.type_channels);
  b.l.resize(g, 6);
  b.u.resize(g);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) {
      b.f(i, d) = uniform01(rng);
      b.v(i, d) = standard_normal(rng);
    }
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < cfg.type_channels; ++c) b.a(i, c) = standard_normal(rng);
  for (int i = 0; i < g; ++i) {
    for (int c = 0; c < 6; ++c) b.l(i, c) = standard_normal(rng);
    b.u[i] = uniform01(rng);
  }
  int o = 0;
  for (int k : sizes) {
    AtomArray blk = b.v.middleRows(o, k);
    b.v.middleRows(o, k) = project_mean_free(blk);
    o += k;
  }
  return b;
}

inline LossTargets random_targets(const NetConfig& cfg, const GraphBatch& b, Rng& rng, bool with_types) {
  const int n = static_cast<int>(b.f.rows());
  const int g = b.num_graphs();
  LossTargets t;
  t.target_v.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) t.target_v(i, d) = standard_normal(rng);
  t.head_scale.resize(g);
  t.inv_sigma2_v.resize(g);
  t.weight_v.resize(g);
  t.target_l.resize(g, 6);
  for (int i = 0; i < g; ++i) {
    t.head_scale[i] = 0.2 + uniform01(rng);
    t.inv_sigma2_v[i] = 2.0 * uniform01(rng);
    t.weight_v[i] = 0.5 + uniform01(rng);
    for (int c = 0; c < 6; ++c) t.target_l(i, c) = standard_normal(rng);
  }
  t.weight_l = 0.7;
  t.target_a.resize(n, cfg.type_channels);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < cfg.type_channels; ++c) t.target_a(i, c) = standard_normal(rng);
  t.weight_a = with_types ? 1.3 : 0.0;
  return t;
}

/// Small network configuration drawn from a fixed menu.
inline NetConfig random_small_config(Rng& rng) {
  NetConfig cfg;
  cfg.hidden_dim = 2 + static_cast<int>(rng() % 3);
  cfg.n_layers = 1 + static_cast<int>(rng() % 2);
  cfg.n_freq = 1 + static_cast<int>(rng() % 2);
  cfg.time_embed_dim = 2 * (1 + static_cast<int>(rng() % 2));
  cfg.type_channels = 1 + static_cast<int>(rng() % 2);
  cfg.layer_norm = rng() % 3 != 0;
  return cfg;
}

/// Random weights at a moderate scale, including norm gains and biases.
inline ScoreNetParams random_params(const NetConfig& cfg, Rng& rng) {
  ScoreNetParams p = zero_params(cfg);
  for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] = 0.6 * standard_normal(rng);
  return p;
}

struct GradCheck {
  double max_rel_err = 0.0;
  long n_params = 0;
};

/// Central differences with step h on every parameter. The error of
/// parameter i is |g_i - fd_i| / max(|fd_i|, 1e-6 * max(1, max_j |fd_j|)),
/// so parameters with a vanishing gradient are compared on the scale of the
/// largest one instead of dividing by zero.
inline GradCheck gradient_check(const GraphBatch& b, const LossTargets& t, const ScoreNetParams& p,
                                const NetConfig& cfg, double h = 1e-4) {
  const Vector g = loss_gradients(b, t, p, cfg).grad;
  Vector fd(p.values.size());
  ScoreNetParams q = p;
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    const double x = p.values[i];
    q.values[i] = x + h;
    const double lp = loss_value(b, t, q, cfg).total;
    q.values[i] = x - h;
    const double lm = loss_value(b, t, q, cfg).total;
    q.values[i] = x;
    fd[i] = (lp - lm) / (2.0 * h);
  }
  const double scale = 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff());
  GradCheck r;
  r.n_params = p.values.size();
  for (Eigen::Index i = 0; i < fd.size(); ++i)
    r.max_rel_err = std::max(r.max_rel_err, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), scale));
  return r;
}

/// Reorders the atoms of every graph by a random permutation. perm[i] is the
/// source row of destination row i.
inline GraphBatch permute_atoms(const GraphBatch& b, Rng& rng, std::vector<int>& perm) {
  const int n = static_cast<int>(b.f.rows());
  perm.resize(n);
  int o = 0;
  for (int k : b.sizes) {
    std::vector<int> local(k);
    std::iota(local.begin(), local.end(), 0);
    std::shuffle(local.begin(), local.end(), rng);
    for (int i = 0; i < k; ++i) perm[o + i] = o + local[i];
    o += k;
  }
  GraphBatch out = b;
  for (int i = 0; i < n; ++i) {
    out.f.row(i) = b.f.row(perm[i]);
    out.v.row(i) = b.v.row(perm[i]);
    out.a.row(i) = b.a.row(perm[i]);
  }
  return out;
}

/// Adds one shift per graph to every fractional coordinate, modulo 1.
inline GraphBatch translate(const GraphBatch& b, Rng& rng) {
  GraphBatch out = b;
  int o = 0;
  for (int k : b.sizes) {
    double delta[3];
    for (double& d : delta) d = uniform01(rng);
    for (int i = o; i < o + k; ++i)
      for (int d = 0; d < 3; ++d) out.f(i, d) = wrap_unit_unchecked(b.f(i, d) + delta[d]);
    o += k;
  }
  return out;
}

}  // namespace kldiff::testing
