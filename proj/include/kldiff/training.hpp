#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kldiff/data.hpp"
#include "kldiff/model.hpp"
#include "kldiff/sampling.hpp"

namespace kldiff {

/// lambda(t_i) for grid indices i = 1..N (entry 0 mirrors entry 1).
struct LambdaTable {
  std::vector<double> values;
  double at(int i) const { return values.at(static_cast<size_t>(i)); }
};

/// Time of grid index i, clamped below at t_min.
double training_time(const KineticSchedule& sched, int i);

/// lambda(t) = 1 / mean over draws of |target_score|^2 per component, for K
/// atoms. Deterministic given the seed; one rng stream per grid index.
LambdaTable precompute_lambda(const KineticSchedule& sched, const InitialVelocity& v0, bool mean_free, int k,
                              int n_mc, std::uint64_t seed);

struct TrainingExample {
  double t = 0.0;
  double u = 0.0;
  AtomArray f_t;
  AtomArray v_t;
  Vec6 l_t;
  RowMatrix a_in;  // clean encoding (CSP) or noisy a_t (DNG)
  AtomArray target_v;
  Vec6 target_l;   // eps_l, or the clean standardized lattice in x0 mode
  RowMatrix target_a;  // eps_a (DNG only)
};

/// Corrupts one crystal at time t: kinetic kernel for (f, v), VP kernel for
/// the standardized lattice and, for DNG, the type encoding.
TrainingExample make_training_targets(const CrystalState& x0, double t, const ModelSpec& spec, Rng& rng);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Bias-corrected adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(AdamWConfig cfg, Eigen::Index n);
  void step(Vector& params, const Vector& grad);
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  Vector m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  int batch_size = 64;
  int max_steps = 20000;
  AdamWConfig optim;
  double lambda_v = 1.0;
  double lambda_l = 1.0;
  std::optional<double> lambda_a;  // default from the type mode
  int lambda_mc = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  int shard = 16;  // samples per gradient shard; fixed for reproducibility

  int log_every = 100;
  int eval_every = 1000;       // 0 disables validation
  int eval_samples = 100;      // validation crystals per evaluation
  int eval_steps = 0;          // sampler steps; 0 = N / 10
  double site_tol = 0.05;
  int patience = 0;            // evaluations without improvement before stopping; 0 = never
  std::optional<double> target_metric;  // records the first evaluation step reaching this value
  bool stop_at_target = false;          // and stops training there
  nlohmann::ordered_json checkpoint_meta;  // copied into every checkpoint header

  void validate() const;
};

struct MetricsRow {
  long step = 0;
  double t_mean = 0.0;
  double loss_total = 0.0;
  double loss_v = 0.0;
  double loss_l = 0.0;
  double loss_a = 0.0;
  std::optional<double> val_metric;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& r);

struct TrainResult {
  ScoreNetParams params;       // final parameters
  ScoreNetParams best_params;  // parameters at the best validation metric
  double best_metric = -1.0;
  long best_step = 0;
  std::optional<long> first_step_reaching;  // first evaluation step with metric >= target_metric
  long steps_done = 0;
  bool diverged = false;
  std::vector<MetricsRow> log;
};

/// Training loop. When checkpoint_path is set, the best-metric parameters
/// (or the final ones when validation is off) are written there; a
/// divergent step aborts training and keeps the last valid checkpoint.
TrainResult train(std::span<const CrystalState> train_set, std::span<const CrystalState> val_set, ModelSpec& spec,
                  const TrainConfig& cfg, const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt,
                  const std::optional<std::filesystem::path>& metrics_path = std::nullopt);

/// Fraction of references matched by one generated sample each (same
/// composition), plus the mean RMSE over matched pairs.
struct MatchSummary {
  double match_rate = 0.0;
  std::optional<double> rmse_mean;
  int n = 0;
};

MatchSummary evaluate_matches(std::span<const CrystalState> generated, std::span<const CrystalState> refs,
                              double site_tol);

std::vector<std::vector<int>> compositions_of(std::span<const CrystalState> xs);

}  // namespace kldiff
