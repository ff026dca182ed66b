#include "kldiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "kldiff/io.hpp"
#include "kldiff/parallel.hpp"

namespace kldiff {

double training_time(const KineticSchedule& sched, int i) { return std::max(sched.grid_time(i), sched.t_min); }

LambdaTable precompute_lambda(const KineticSchedule& sched, const InitialVelocity& v0, bool mean_free, int k,
                              int n_mc, std::uint64_t seed) {
  if (n_mc < 1000) throw std::invalid_argument("precompute_lambda: n_mc must be >= 1000");
  if (k < 1) throw std::invalid_argument("precompute_lambda: k must be >= 1");
  LambdaTable table;
  table.values.assign(static_cast<size_t>(sched.n_steps + 1), 1.0);
  const AtomArray f0 = AtomArray::Zero(k, 3);
  const double dims = 3.0 * k;
  for (int i = 1; i <= sched.n_steps; ++i) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(i), 0x1a3b);
    const double t = training_time(sched, i);
    double acc = 0.0;
    for (int m = 0; m < n_mc; ++m) {
      const AtomArray v0s = v0.sample(k, mean_free, rng);
      const NoisySample s = sample_transition(f0, v0s, t, sched, mean_free, rng);
      acc += target_score(s, v0s, sched, mean_free).squaredNorm();
    }
    const double per_component = acc / (n_mc * dims);
    // A single mean-free atom has no degrees of freedom and a zero target.
    table.values[i] = per_component > 0.0 ? 1.0 / per_component : 1.0;
  }
  table.values[0] = table.values[1];
  return table;
}

TrainingExample make_training_targets(const CrystalState& x0, double t, const ModelSpec& spec, Rng& rng) {
  TrainingExample ex;
  const int k = x0.k();
  ex.t = t;
  ex.u = spec.net_time(t);
  const AtomArray v0 = spec.v0.sample(k, spec.mean_free, rng);
  NoisySample ns = sample_transition(x0.f, v0, t, spec.sched, spec.mean_free, rng);
  ex.target_v = target_score(ns, v0, spec.sched, spec.mean_free);
  ex.f_t = std::move(ns.f_t);
  ex.v_t = std::move(ns.v_t);

  Vec6 l0 = lattice_encode(x0.lattice);
  if (spec.standardize) l0 = spec.stdz.apply(l0);
  const VpDraw ld = vp_sample(l0, ex.u, spec.vp, rng);
  ex.l_t = ld.x_t;
  ex.target_l = spec.lattice_mode == OutputMode::Eps ? Vec6(ld.eps) : l0;

  RowMatrix a0 = encode_types(x0.species, spec.num_species, spec.type_mode);
  if (spec.task == Task::DNG) {
    const Vector flat = Eigen::Map<const Vector>(a0.data(), a0.size());
    const VpDraw ad = vp_sample(flat, ex.u, spec.vp, rng);
    ex.a_in = Eigen::Map<const RowMatrix>(ad.x_t.data(), a0.rows(), a0.cols());
    ex.target_a = Eigen::Map<const RowMatrix>(ad.eps.data(), a0.rows(), a0.cols());
  } else {
    ex.a_in = std::move(a0);
  }
  return ex;
}

AdamW::AdamW(AdamWConfig cfg, Eigen::Index n) : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void AdamW::step(Vector& params, const Vector& grad) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  params *= 1.0 - cfg_.lr * cfg_.weight_decay;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  params.array() -= cfg_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(optim.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(lambda_v > 0.0) || !(lambda_l > 0.0)) throw ConfigError("train loss weights must be positive");
  if (lambda_a && !(*lambda_a > 0.0)) throw ConfigError("train.lambda_a must be positive");
  if (lambda_mc < 1000) throw ConfigError("train.lambda_mc must be >= 1000");
  if (shard < 1) throw ConfigError("train.shard must be >= 1");
  if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
  if (eval_every < 0 || eval_samples < 0 || eval_steps < 0 || patience < 0)
    throw ConfigError("train evaluation settings must be non-negative");
}

std::string metrics_csv_header() { return "step,t_mean,loss_total,loss_v,loss_l,loss_a,val_metric\n"; }

std::string metrics_csv_line(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,", r.step, r.t_mean, r.loss_total, r.loss_v, r.loss_l,
                r.loss_a);
  std::string s = buf;
  if (r.val_metric) {
    std::snprintf(buf, sizeof buf, "%.6f", *r.val_metric);
    s += buf;
  }
  s += '\n';
  return s;
}

std::vector<std::vector<int>> compositions_of(std::span<const CrystalState> xs) {
  std::vector<std::vector<int>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.species);
  return out;
}

MatchSummary evaluate_matches(std::span<const CrystalState> generated, std::span<const CrystalState> refs,
                              double site_tol) {
  if (generated.size() != refs.size()) throw std::invalid_argument("evaluate_matches: size mismatch");
  MatchSummary m;
  m.n = static_cast<int>(refs.size());
  if (m.n == 0) return m;
  int hits = 0;
  double rmse_sum = 0.0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const MatchResult r = structure_match(generated[i], refs[i], site_tol);
    if (r.matched) {
      ++hits;
      rmse_sum += *r.rmse;
    }
  }
  m.match_rate = static_cast<double>(hits) / m.n;
  if (hits > 0) m.rmse_mean = rmse_sum / hits;
  return m;
}

namespace {

struct Assembled {
  GraphBatch batch;
  LossTargets targets;
};

Assembled assemble(std::span<const TrainingExample> exs, std::span<const double> weight_v, const ModelSpec& spec,
                   const TrainConfig& cfg) {
  Assembled a;
  const int b = static_cast<int>(exs.size());
  int n = 0;
  for (const auto& e : exs) {
    a.batch.sizes.push_back(static_cast<int>(e.f_t.rows()));
    n += static_cast<int>(e.f_t.rows());
  }
  const int ch = spec.net.type_channels;
  a.batch.f.resize(n, 3);
  a.batch.v.resize(n, 3);
  a.batch.a.resize(n, ch);
  a.batch.l.resize(b, 6);
  a.batch.u.resize(b);
  LossTargets& t = a.targets;
  t.target_v.resize(n, 3);
  t.head_scale.resize(b);
  t.inv_sigma2_v.resize(b);
  t.weight_v.resize(b);
  t.target_l.resize(b, 6);
  t.weight_l = cfg.lambda_l;
  const bool dng = spec.task == Task::DNG;
  t.weight_a = dng ? cfg.lambda_a.value_or(type_loss_weight(spec.type_mode)) : 0.0;
  if (dng) t.target_a.resize(n, ch);
  int o = 0;
  for (int g = 0; g < b; ++g) {
    const auto& e = exs[g];
    const int k = static_cast<int>(e.f_t.rows());
    a.batch.f.middleRows(o, k) = e.f_t;
    a.batch.v.middleRows(o, k) = e.v_t;
    a.batch.a.middleRows(o, k) = e.a_in;
    a.batch.l.row(g) = e.l_t.transpose();
    a.batch.u[g] = e.u;
    t.target_v.middleRows(o, k) = e.target_v;
    const auto vh = spec.velocity_head(e.t);
    t.head_scale[g] = vh.head_scale;
    t.inv_sigma2_v[g] = vh.inv_sigma2_v;
    t.weight_v[g] = weight_v[g];
    t.target_l.row(g) = e.target_l.transpose();
    if (dng) t.target_a.middleRows(o, k) = e.target_a;
    o += k;
  }
  return a;
}

void write_checkpoint(const std::filesystem::path& path, const ModelSpec& spec, const ScoreNetParams& p,
                      const TrainConfig& cfg, long step, std::optional<double> metric) {
  Checkpoint ck;
  ck.net = spec.net;
  ck.params = p;
  ck.meta = cfg.checkpoint_meta.is_object() ? cfg.checkpoint_meta : nlohmann::ordered_json::object();
  ck.meta["model"] = spec.to_json();
  ck.meta["step"] = step;
  ck.meta["seed"] = cfg.seed;
  if (metric) ck.meta["val_metric"] = *metric;
  save_checkpoint(path, ck);
}

}  // namespace

TrainResult train(std::span<const CrystalState> train_set, std::span<const CrystalState> val_set, ModelSpec& spec,
                  const TrainConfig& cfg, const std::optional<std::filesystem::path>& checkpoint_path,
                  const std::optional<std::filesystem::path>& metrics_path) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& x : train_set) x.validate(spec.num_species);

  if (spec.standardize) {
    std::vector<Vec6> enc;
    enc.reserve(train_set.size());
    for (const auto& x : train_set) enc.push_back(lattice_encode(x.lattice));
    spec.stdz = Standardizer::fit(enc);
  } else {
    spec.stdz = Standardizer{};
  }
  spec.validate();
  if (spec.sched.n_steps < 10) throw ConfigError("training needs schedule.n_steps >= 10");

  std::map<int, LambdaTable> lambda;
  for (const auto& x : train_set)
    if (!lambda.count(x.k()))
      lambda[x.k()] = precompute_lambda(spec.sched, spec.v0, spec.mean_free, x.k(), cfg.lambda_mc, cfg.seed);

  TrainResult res;
  Rng init_rng = make_stream(cfg.seed, 0, 0x1417);
  res.params = init_params(spec.net, init_rng);
  res.best_params = res.params;
  AdamW opt(cfg.optim, res.params.values.size());

  Rng pick_rng = make_stream(cfg.seed, 0, 0x9c1c);
  std::uniform_int_distribution<size_t> pick(0, train_set.size() - 1);
  std::uniform_int_distribution<int> pick_t(1, spec.sched.n_steps);

  const size_t n_val = std::min(val_set.size(), static_cast<size_t>(cfg.eval_samples));
  const std::vector<std::vector<int>> val_comps = compositions_of(val_set.first(n_val));
  SamplerConfig val_sampler;
  val_sampler.scheme = Scheme::EM;
  val_sampler.n_steps = cfg.eval_steps > 0 ? cfg.eval_steps : std::max(1, spec.sched.n_steps / 10);
  val_sampler.seed = mix_seed(cfg.seed ^ 0x5eed);
  val_sampler.threads = cfg.threads;

  const int bsz = cfg.batch_size;
  const int n_shards = (bsz + cfg.shard - 1) / cfg.shard;
  std::vector<TrainingExample> exs(static_cast<size_t>(bsz));
  std::vector<double> wv(static_cast<size_t>(bsz));
  std::vector<LossGrad> shard_out(static_cast<size_t>(n_shards));

  MetricsRow acc;
  long acc_n = 0;
  int evals_without_gain = 0;
  bool wrote_checkpoint = false;

  for (long step = 1; step <= cfg.max_steps; ++step) {
    for (int b = 0; b < bsz; ++b) {
      const size_t idx = pick(pick_rng);
      Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b) + 1);
      const int ti = pick_t(rng);
      const double t = training_time(spec.sched, ti);
      exs[b] = make_training_targets(train_set[idx], t, spec, rng);
      wv[b] = cfg.lambda_v * lambda.at(train_set[idx].k()).at(ti);
    }

    bool finite = true;
    try {
      parallel_for(n_shards, cfg.threads, [&](int s) {
        const int lo = s * cfg.shard;
        const int hi = std::min(bsz, lo + cfg.shard);
        const auto span_ex = std::span<const TrainingExample>(exs).subspan(lo, hi - lo);
        const auto span_w = std::span<const double>(wv).subspan(lo, hi - lo);
        Assembled a = assemble(span_ex, span_w, spec, cfg);
        shard_out[s] = loss_gradients(a.batch, a.targets, res.params, spec.net);
      });
    } catch (const std::runtime_error&) {
      finite = false;
    }
    Vector grad = Vector::Zero(res.params.values.size());
    LossBreakdown loss;
    if (finite) {
      for (const auto& so : shard_out) {
        grad += so.grad;
        loss.total += so.loss.total;
        loss.v += so.loss.v;
        loss.l += so.loss.l;
        loss.a += so.loss.a;
      }
      grad /= bsz;
      finite = grad.allFinite() && std::isfinite(loss.total);
    }
    if (!finite) {
      res.diverged = true;
      break;
    }
    const Vector before = res.params.values;
    opt.step(res.params.values, grad);
    if (!res.params.values.allFinite()) {
      res.params.values = before;
      res.diverged = true;
      break;
    }
    res.steps_done = step;

    double t_sum = 0.0;
    for (const auto& e : exs) t_sum += e.t;
    acc.t_mean += t_sum / bsz;
    acc.loss_total += loss.total / bsz;
    acc.loss_v += loss.v / bsz;
    acc.loss_l += loss.l / bsz;
    acc.loss_a += loss.a / bsz;
    ++acc_n;

    const bool do_eval = cfg.eval_every > 0 && n_val > 0 && step % cfg.eval_every == 0;
    const bool do_log = step % cfg.log_every == 0 || do_eval || step == cfg.max_steps;
    std::optional<double> metric;
    bool stop = false;
    if (do_eval) {
      NetworkScoreModel model(spec, res.params);
      const auto gen = sample_em(model, val_comps, val_sampler);
      metric = evaluate_matches(gen, val_set.first(n_val), cfg.site_tol).match_rate;
      if (*metric > res.best_metric) {
        res.best_metric = *metric;
        res.best_step = step;
        res.best_params = res.params;
        evals_without_gain = 0;
        if (checkpoint_path) {
          write_checkpoint(*checkpoint_path, spec, res.params, cfg, step, metric);
          wrote_checkpoint = true;
        }
      } else {
        ++evals_without_gain;
      }
      if (cfg.target_metric && !res.first_step_reaching && *metric >= *cfg.target_metric) {
        res.first_step_reaching = step;
        stop = cfg.stop_at_target;
      }
    }
    if (do_log) {
      MetricsRow row;
      row.step = step;
      row.t_mean = acc.t_mean / acc_n;
      row.loss_total = acc.loss_total / acc_n;
      row.loss_v = acc.loss_v / acc_n;
      row.loss_l = acc.loss_l / acc_n;
      row.loss_a = acc.loss_a / acc_n;
      row.val_metric = metric;
      res.log.push_back(row);
      acc = MetricsRow{};
      acc_n = 0;
    }
    if (stop) break;
    if (cfg.patience > 0 && evals_without_gain >= cfg.patience) break;
  }

  if (res.best_metric < 0.0) res.best_params = res.params;
  if (checkpoint_path && !wrote_checkpoint)
    write_checkpoint(*checkpoint_path, spec, res.params, cfg, res.steps_done, std::nullopt);
  if (metrics_path) {
    std::string csv = metrics_csv_header();
    for (const auto& r : res.log) csv += metrics_csv_line(r);
    write_file_atomic(*metrics_path, csv);
  }
  return res;
}

}  // namespace kldiff
