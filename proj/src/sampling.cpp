#include "kldiff/sampling.hpp"

#include <cmath>

#include "kldiff/parallel.hpp"
#include "kldiff/torus.hpp"
#include "kldiff/wrapped_normal.hpp"

namespace kldiff {

NetworkScoreModel::NetworkScoreModel(ModelSpec spec, ScoreNetParams params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (params_.values.size() != zero_params(spec_.net).values.size())
    throw ConfigError("parameter vector does not match the network configuration");
}

ScoreEval NetworkScoreModel::evaluate(const GraphBatch& batch, double t) const {
  NetOutput out = forward(batch, params_, spec_.net);
  const int b = batch.num_graphs();
  ScoreEval e;
  const auto vh = spec_.velocity_head(t);
  e.score_v = assemble_velocity_score(out.out_v, batch, Vector::Constant(b, vh.head_scale),
                                      Vector::Constant(b, vh.inv_sigma2_v));
  const double u = spec_.net_time(t);
  e.eps_l.resize(b, 6);
  for (int g = 0; g < b; ++g) {
    const Vector o = out.out_l.row(g).transpose();
    const Vector x = batch.l.row(g).transpose();
    e.eps_l.row(g) = score_param_convert(o, x, u, spec_.vp, spec_.lattice_mode).transpose();
  }
  e.eps_a = std::move(out.out_a);
  return e;
}

DeltaScoreModel::DeltaScoreModel(ModelSpec spec, CrystalState data) : spec_(std::move(spec)), data_(std::move(data)) {
  spec_.validate();
  if (spec_.mean_free) throw ConfigError("DeltaScoreModel requires mean_free = false");
  if (!spec_.v0.is_zero()) throw ConfigError("DeltaScoreModel requires zero initial velocities");
  Vec6 l = lattice_encode(data_.lattice);
  l_data_ = spec_.standardize ? spec_.stdz.apply(l) : l;
}

ScoreEval DeltaScoreModel::evaluate(const GraphBatch& batch, double t) const {
  const auto& s = spec_.sched;
  const double c = s.mu_coef(t);
  const double inv_s2v = 1.0 / s.sigma2_v(t);
  WrappedNormalParams wn;
  wn.sigma2 = s.sigma2_r(t);
  wn.period = 1.0;
  ScoreEval e;
  e.score_v.resize(batch.f.rows(), 3);
  Eigen::Index o = 0;
  for (int g = 0; g < batch.num_graphs(); ++g) {
    if (batch.sizes[g] != data_.k()) throw std::invalid_argument("DeltaScoreModel: atom count differs from the data");
    for (int i = 0; i < data_.k(); ++i) {
      for (int d = 0; d < 3; ++d) {
        const double v = batch.v(o + i, d);
        wn.mu = c * v;
        e.score_v(o + i, d) = c * wn_score_mean(batch.f(o + i, d) - data_.f(i, d), wn) - v * inv_s2v;
      }
    }
    o += batch.sizes[g];
  }
  const double u = spec_.net_time(t);
  const double alpha = spec_.vp.alpha(u);
  const double sigma = spec_.vp.sigma(u);
  e.eps_l.resize(batch.num_graphs(), 6);
  for (int g = 0; g < batch.num_graphs(); ++g)
    e.eps_l.row(g) = (batch.l.row(g) - alpha * l_data_.transpose()) / sigma;
  e.eps_a = RowMatrix::Zero(batch.a.rows(), batch.a.cols());
  return e;
}

std::string to_string(Scheme s) { return s == Scheme::EM ? "em" : "pc"; }
std::string to_string(Integrator i) { return i == Integrator::Exact ? "exact" : "verbatim"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "em") return Scheme::EM;
  if (s == "pc") return Scheme::PC;
  throw ConfigError("unknown sampler scheme '" + s + "' (expected em or pc)");
}

Integrator parse_integrator(const std::string& s) {
  if (s == "exact") return Integrator::Exact;
  if (s == "verbatim") return Integrator::Verbatim;
  throw ConfigError("unknown integrator '" + s + "' (expected exact or verbatim)");
}

void SamplerConfig::validate() const {
  if (n_steps < 1) throw ConfigError("sampler.n_steps must be >= 1");
  if (scheme == Scheme::PC && !(tau > 0.0)) throw ConfigError("sampler.tau must be positive for PC");
  if (n_corrector < 0) throw ConfigError("sampler.n_corrector must be >= 0");
  if (chunk < 1) throw ConfigError("sampler.chunk must be >= 1");
}

double corrector_step_size(double tau, const AtomArray& score) {
  const double n2 = score.squaredNorm();
  if (!(n2 > 0.0)) return 0.0;
  return tau * static_cast<double>(score.size()) / n2;
}

namespace {

enum class VStep { ExpExact, ExpVerbatim, PlainEM };

struct Chunk {
  GraphBatch batch;
  std::vector<int> offset;
  std::vector<Rng> rng;
  std::vector<std::vector<int>> species;
  long corrector_skips = 0;
};

void project_block(AtomArray& x, Eigen::Index o, int k) {
  auto blk = x.middleRows(o, k);
  const Eigen::RowVector3d mean = blk.colwise().mean();
  blk.rowwise() -= mean;
}

Chunk init_chunk(const ModelSpec& spec, std::span<const std::vector<int>> comps, size_t begin, size_t end,
                 const SamplerConfig& cfg) {
  Chunk c;
  const int b = static_cast<int>(end - begin);
  int n = 0;
  for (size_t i = begin; i < end; ++i) {
    const int k = static_cast<int>(comps[i].size());
    if (k < 1) throw std::invalid_argument("sampler: empty composition");
    c.offset.push_back(n);
    c.batch.sizes.push_back(k);
    c.species.push_back(comps[i]);
    c.rng.push_back(make_stream(cfg.seed, i));
    n += k;
  }
  const int ch = spec.net.type_channels;
  c.batch.f.resize(n, 3);
  c.batch.v.resize(n, 3);
  c.batch.a.resize(n, ch);
  c.batch.l.resize(b, 6);
  c.batch.u.resize(b);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int g = 0; g < b; ++g) {
    Rng& r = c.rng[g];
    const int k = c.batch.sizes[g];
    const int o = c.offset[g];
    for (int i = 0; i < k; ++i)
      for (int d = 0; d < 3; ++d) c.batch.f(o + i, d) = uni(r);
    for (int i = 0; i < k; ++i)
      for (int d = 0; d < 3; ++d) c.batch.v(o + i, d) = normal(r);
    if (spec.mean_free) project_block(c.batch.v, o, k);
    for (int d = 0; d < 6; ++d) c.batch.l(g, d) = normal(r);
    if (spec.task == Task::CSP) {
      for (int s : c.species[g])
        if (s < 0 || s >= spec.num_species) throw std::invalid_argument("sampler: species index out of range");
      c.batch.a.middleRows(o, k) = encode_types(c.species[g], spec.num_species, spec.type_mode);
    } else {
      for (int i = 0; i < k; ++i)
        for (int q = 0; q < ch; ++q) c.batch.a(o + i, q) = normal(r);
    }
  }
  return c;
}

void draw_velocity_noise(Chunk& c, const ModelSpec& spec, bool inject, AtomArray& eps) {
  eps.resize(c.batch.v.rows(), 3);
  if (!inject) {
    eps.setZero();
    return;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int g = 0; g < c.batch.num_graphs(); ++g) {
    const int k = c.batch.sizes[g];
    const int o = c.offset[g];
    for (int i = 0; i < k; ++i)
      for (int d = 0; d < 3; ++d) eps(o + i, d) = normal(c.rng[g]);
    if (spec.mean_free) project_block(eps, o, k);
  }
}

// Reverse VP Euler-Maruyama step from u to u - hu for lattice (and types).
void euclidean_step(Chunk& c, const ModelSpec& spec, const ScoreEval& e, double u, double hu, bool add_noise) {
  const double beta = spec.vp.beta(u);
  const double sigma = spec.vp.sigma(u);
  const double noise = std::sqrt(beta * hu);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool dng = spec.task == Task::DNG;
  for (int g = 0; g < c.batch.num_graphs(); ++g) {
    Rng& r = c.rng[g];
    for (int d = 0; d < 6; ++d) {
      const double x = c.batch.l(g, d);
      const double score = -e.eps_l(g, d) / sigma;
      const double z = normal(r);
      c.batch.l(g, d) = x + (0.5 * beta * x + beta * score) * hu + (add_noise ? noise * z : 0.0);
    }
    if (!dng) continue;
    const int o = c.offset[g];
    for (int i = 0; i < c.batch.sizes[g]; ++i) {
      for (Eigen::Index q = 0; q < c.batch.a.cols(); ++q) {
        const double x = c.batch.a(o + i, q);
        const double score = -e.eps_a(o + i, q) / sigma;
        const double z = normal(r);
        c.batch.a(o + i, q) = x + (0.5 * beta * x + beta * score) * hu + (add_noise ? noise * z : 0.0);
      }
    }
  }
}

void move_positions(AtomArray& f, const AtomArray& from, const AtomArray& v, double h) {
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (int d = 0; d < 3; ++d) f(i, d) = wrap_unit_unchecked(from(i, d) - v(i, d) * h);
}

double grid_time(const ModelSpec& spec, int n, int n_steps) {
  return spec.sched.horizon * static_cast<double>(n) / n_steps;
}

void notify(const SamplerConfig& cfg, int step, std::string_view stage, const Chunk& c) {
  if (cfg.observer) cfg.observer(step, stage, c.batch.f, c.batch.v, c.batch.sizes);
}

// Runs reverse steps n = n_steps .. n_stop + 1 on the velocity/position pair.
void run_exponential(const ScoreModel& model, Chunk& c, const SamplerConfig& cfg, VStep kind, int n_steps,
                     int n_stop) {
  const ModelSpec& spec = model.spec();
  const double gamma = spec.sched.gamma;
  const double h = spec.sched.horizon / n_steps;
  const double hu = 1.0 / n_steps;
  const double grow = std::exp(gamma * h);
  double score_coef = 0.0;
  double noise_scale = 0.0;
  switch (kind) {
    case VStep::ExpExact:
      score_coef = 2.0 * std::expm1(gamma * h);
      noise_scale = std::sqrt(std::expm1(2.0 * gamma * h));
      break;
    case VStep::ExpVerbatim:
      score_coef = 2.0 * std::expm1(2.0 * gamma * h);
      noise_scale = std::sqrt(std::expm1(2.0 * gamma * h));
      break;
    case VStep::PlainEM:
      score_coef = 2.0 * gamma * h;
      noise_scale = std::sqrt(2.0 * gamma * h);
      break;
  }
  const double drift = kind == VStep::PlainEM ? 1.0 + gamma * h : grow;

  AtomArray eps;
  AtomArray f_prev;
  notify(cfg, n_steps, "prior", c);
  for (int n = n_steps; n > n_stop; --n) {
    const double t = grid_time(spec, n, n_steps);
    c.batch.u.setConstant(spec.net_time(t));
    const ScoreEval e = model.evaluate(c.batch, t);
    draw_velocity_noise(c, spec, cfg.inject_noise, eps);
    c.batch.v = drift * c.batch.v + score_coef * e.score_v + noise_scale * eps;
    f_prev = c.batch.f;
    move_positions(c.batch.f, f_prev, c.batch.v, h);
    euclidean_step(c, spec, e, static_cast<double>(n) / n_steps, hu, cfg.inject_noise && n > 1);
    notify(cfg, n, "step", c);
  }
}

void run_pc(const ScoreModel& model, Chunk& c, const SamplerConfig& cfg) {
  const ModelSpec& spec = model.spec();
  const auto& s = spec.sched;
  const int n_steps = cfg.n_steps;
  const double h = s.horizon / n_steps;
  const double hu = 1.0 / n_steps;
  AtomArray eps;
  AtomArray f_prev;
  notify(cfg, n_steps, "prior", c);
  for (int n = n_steps; n > 0; --n) {
    const double t = grid_time(spec, n, n_steps);
    const double t_next = grid_time(spec, n - 1, n_steps);
    c.batch.u.setConstant(spec.net_time(t));
    const ScoreEval e = model.evaluate(c.batch, t);

    const double sig = s.sigma_v(t);
    const double sig_next = n > 1 ? s.sigma_v(t_next) : 0.0;
    const double r = s.alpha_v(t_next) / s.alpha_v(t);
    const double coef = (r * sig - sig_next) * sig;
    c.batch.v = r * c.batch.v + coef * e.score_v;
    f_prev = c.batch.f;
    move_positions(c.batch.f, f_prev, c.batch.v, h);
    euclidean_step(c, spec, e, static_cast<double>(n) / n_steps, hu, cfg.inject_noise && n > 1);
    notify(cfg, n, "predictor", c);

    // sigma_v(0) = 0: the velocity score is undefined at the end point.
    if (n > 1) {
      for (int k = 0; k < cfg.n_corrector; ++k) {
        c.batch.u.setConstant(spec.net_time(t_next));
        const ScoreEval ec = model.evaluate(c.batch, t_next);
        draw_velocity_noise(c, spec, cfg.inject_noise, eps);
        for (int g = 0; g < c.batch.num_graphs(); ++g) {
          const int o = c.offset[g];
          const int kk = c.batch.sizes[g];
          const AtomArray sg = ec.score_v.middleRows(o, kk);
          const double delta = corrector_step_size(cfg.tau, sg);
          if (delta == 0.0) {
            ++c.corrector_skips;
            continue;
          }
          c.batch.v.middleRows(o, kk) += delta * sg + std::sqrt(2.0 * delta) * eps.middleRows(o, kk);
        }
        notify(cfg, n, "corrector", c);
      }
    }
    move_positions(c.batch.f, f_prev, c.batch.v, h);
    notify(cfg, n, "step", c);
  }
}

std::vector<CrystalState> finish_chunk(const ModelSpec& spec, const Chunk& c) {
  std::vector<CrystalState> out;
  for (int g = 0; g < c.batch.num_graphs(); ++g) {
    const int o = c.offset[g];
    const int k = c.batch.sizes[g];
    CrystalState x;
    x.f = c.batch.f.middleRows(o, k);
    Vec6 l = c.batch.l.row(g).transpose();
    if (spec.standardize) l = spec.stdz.invert(l);
    try {
      x.lattice = lattice_decode(l);
    } catch (const std::domain_error&) {
      throw SamplingError("sampler: non-finite lattice for sample " + std::to_string(g) +
                          " (encoded lattice contains NaN or inf)");
    }
    if (spec.task == Task::CSP)
      x.species = c.species[g];
    else
      x.species = decode_types(c.batch.a.middleRows(o, k), spec.num_species, spec.type_mode);
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<CrystalState> run_sampler(const ScoreModel& model, std::span<const std::vector<int>> comps,
                                      const SamplerConfig& cfg, Scheme scheme, SampleStats* stats) {
  cfg.validate();
  const ModelSpec& spec = model.spec();
  const size_t total = comps.size();
  const int n_chunks = static_cast<int>((total + cfg.chunk - 1) / cfg.chunk);
  std::vector<std::vector<CrystalState>> parts(static_cast<size_t>(n_chunks));
  std::vector<long> skips(static_cast<size_t>(n_chunks), 0);
  parallel_for(n_chunks, cfg.threads, [&](int ci) {
    const size_t begin = static_cast<size_t>(ci) * cfg.chunk;
    const size_t end = std::min(total, begin + cfg.chunk);
    Chunk c = init_chunk(spec, comps, begin, end, cfg);
    if (scheme == Scheme::EM)
      run_exponential(model, c, cfg, cfg.integrator == Integrator::Exact ? VStep::ExpExact : VStep::ExpVerbatim,
                      cfg.n_steps, 0);
    else
      run_pc(model, c, cfg);
    parts[ci] = finish_chunk(spec, c);
    skips[ci] = c.corrector_skips;
  });
  std::vector<CrystalState> out;
  out.reserve(total);
  for (auto& p : parts)
    for (auto& x : p) out.push_back(std::move(x));
  if (stats != nullptr)
    for (long s : skips) stats->corrector_skips += s;
  return out;
}

}  // namespace

std::vector<CrystalState> sample_em(const ScoreModel& model, std::span<const std::vector<int>> compositions,
                                    const SamplerConfig& cfg, SampleStats* stats) {
  return run_sampler(model, compositions, cfg, Scheme::EM, stats);
}

std::vector<CrystalState> sample_pc(const ScoreModel& model, std::span<const std::vector<int>> compositions,
                                    const SamplerConfig& cfg, SampleStats* stats) {
  return run_sampler(model, compositions, cfg, Scheme::PC, stats);
}

std::vector<CrystalState> generate(const ScoreModel& model, std::span<const std::vector<int>> compositions,
                                   const SamplerConfig& cfg, SampleStats* stats) {
  return run_sampler(model, compositions, cfg, cfg.scheme, stats);
}

CoeffCheckReport integrator_coeff_check(const ScoreModel& model, const std::vector<int>& composition, int n_samples,
                                        int n_coarse, int fine_factor, double t_stop, std::uint64_t seed) {
  const ModelSpec& spec = model.spec();
  if (n_samples < 2 || n_coarse < 1 || fine_factor < 1) throw std::invalid_argument("integrator_coeff_check: bad sizes");
  const double horizon = spec.sched.horizon;
  if (!(t_stop > 0.0 && t_stop < horizon)) throw std::invalid_argument("integrator_coeff_check: t_stop must lie in (0, T)");
  const int stop_coarse = static_cast<int>(std::lround(t_stop / horizon * n_coarse));
  const int n_fine = n_coarse * fine_factor;

  CoeffCheckReport rep;
  rep.t_stop = horizon * stop_coarse / n_coarse;
  rep.n_coarse = n_coarse;
  rep.n_fine = n_fine;
  rep.var_target = spec.sched.sigma2_v(rep.t_stop);

  std::vector<std::vector<int>> comps(static_cast<size_t>(n_samples), composition);
  SamplerConfig cfg;
  cfg.seed = seed;
  cfg.chunk = n_samples;
  const auto run = [&](VStep kind, int n, int stop) {
    Chunk c = init_chunk(spec, comps, 0, comps.size(), cfg);
    run_exponential(model, c, cfg, kind, n, stop);
    const double m = c.batch.v.mean();
    return (c.batch.v.array() - m).square().sum() / static_cast<double>(c.batch.v.size() - 1);
  };
  rep.var_exact = run(VStep::ExpExact, n_coarse, stop_coarse);
  rep.var_verbatim = run(VStep::ExpVerbatim, n_coarse, stop_coarse);
  rep.var_fine = run(VStep::PlainEM, n_fine, stop_coarse * fine_factor);
  const double entries = static_cast<double>(n_samples) * composition.size() * 3;
  rep.se = rep.var_target * std::sqrt(2.0 / entries);
  // Two independent variance estimates plus an O(h) discretization allowance.
  const double tol = 4.0 * std::sqrt(2.0) * rep.se + 2.0 * horizon / n_coarse;
  rep.exact_agrees = std::abs(rep.var_exact - rep.var_fine) < tol;
  rep.verbatim_agrees = std::abs(rep.var_verbatim - rep.var_fine) < tol;
  return rep;
}

}  // namespace kldiff
