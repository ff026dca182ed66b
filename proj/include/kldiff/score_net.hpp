#pragma once

// Periodic-translation-invariant message-passing score network.
//
// Node state starts from the atom-type encoding and a sinusoidal embedding
// of diffusion time. Every layer runs a fully connected message pass over
// ordered atom pairs (i, j), i != j:
//
//   m_ij = phi_m(h_i, h_j, v_i, v_j, l, sinemb(f_j - f_i))
//   h_i += phi_h(h_i, sum_j m_ij)
//
// Coordinates only enter through fractional differences, so a global shift
// of f leaves every output unchanged. Gradients are accumulated by hand in
// reverse order through this fixed architecture.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "kldiff/rng.hpp"
#include "kldiff/types.hpp"

namespace kldiff {

struct NetConfig {
  int n_layers = 4;
  int hidden_dim = 64;
  int time_embed_dim = 32;
  int n_freq = 8;
  int type_channels = 1;  // width of the atom-type input and of the type head
  bool layer_norm = true;
  std::string activation = "silu";

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
};

struct TensorShape {
  std::string name;
  int rows = 0;
  int cols = 1;
  long size() const { return static_cast<long>(rows) * cols; }
};

/// Flat parameter vector plus the shape table it is laid out by.
struct ScoreNetParams {
  std::vector<TensorShape> shapes;
  Vector values;

  long size() const { return values.size(); }
};

std::vector<TensorShape> param_shapes(const NetConfig& cfg);
ScoreNetParams zero_params(const NetConfig& cfg);
/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit norm gains.
ScoreNetParams init_params(const NetConfig& cfg, Rng& rng);

/// (sin 2 pi k x, cos 2 pi k x) for k = 1..n_freq, interleaved.
Vector sinusoidal_embed(double x, int n_freq);
/// Transformer-style embedding of u in [0, 1]; `dim` must be even.
Vector time_embed(double u, int dim);

/// A batch of independent graphs, nodes stacked graph after graph.
struct GraphBatch {
  std::vector<int> sizes;  // atoms per graph
  AtomArray f;             // N x 3 fractional coordinates
  AtomArray v;             // N x 3 velocities
  RowMatrix a;             // N x type_channels
  RowMatrix l;             // B x 6 encoded (standardized) lattice
  Vector u;                // B, network time in [0, 1]

  int num_graphs() const { return static_cast<int>(sizes.size()); }
  /// Throws std::invalid_argument when the arrays disagree with `sizes`.
  void check(const NetConfig& cfg) const;
};

struct NetOutput {
  AtomArray out_v;  // N x 3, mean-projected within each graph
  RowMatrix out_l;  // B x 6
  RowMatrix out_a;  // N x type_channels
};

NetOutput forward(const GraphBatch& batch, const ScoreNetParams& params, const NetConfig& cfg);

/// Simplified: the head models the coordinate term and the -v / sigma2_v
/// part is added in closed form (zero initial velocities only).
/// Direct: the head models the whole velocity score.
enum class ScoreParam { Simplified, Direct };

/// Per graph g: s = head_scale[g] * out_v - inv_sigma2_v[g] * v.
AtomArray assemble_velocity_score(const AtomArray& out_v, const GraphBatch& batch, const Vector& head_scale,
                                  const Vector& inv_sigma2_v);

struct LossTargets {
  AtomArray target_v;   // N x 3
  Vector head_scale;    // B
  Vector inv_sigma2_v;  // B
  Vector weight_v;      // B, lambda_v * lambda(t)
  RowMatrix target_l;   // B x 6
  double weight_l = 1.0;
  RowMatrix target_a;   // N x C; ignored when weight_a == 0
  double weight_a = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double v = 0.0;
  double l = 0.0;
  double a = 0.0;
};

struct LossGrad {
  LossBreakdown loss;  // sums over graphs
  Vector grad;         // gradient of loss.total
};

/// Sum over graphs of w_v |s - target_v|^2 + w_l |out_l - target_l|^2
/// + w_a |out_a - target_a|^2, and its exact parameter gradient.
LossGrad loss_gradients(const GraphBatch& batch, const LossTargets& targets, const ScoreNetParams& params,
                        const NetConfig& cfg);

/// Loss only; same value as loss_gradients(...).loss.
LossBreakdown loss_value(const GraphBatch& batch, const LossTargets& targets, const ScoreNetParams& params,
                         const NetConfig& cfg);

struct Checkpoint {
  NetConfig net;
  ScoreNetParams params;
  nlohmann::ordered_json meta;  // caller-owned settings (schedule, standardizer, ...)
};

/// Layout: 8-byte magic, u64 header length, JSON header, little-endian f64
/// payload, u64 CRC-64 of everything before it. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error on a bad magic, checksum or shape table.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kldiff
