// kldiff: command-line front end.
//
// Exit codes: 0 success, 1 a check or run failed, 2 usage error (bad flags,
// malformed config, unreadable inputs). Usage errors are detected before the
// output directory is touched, so they never leave partial files behind.
//
// Log verbosity comes from SPDLOG_LEVEL (e.g. SPDLOG_LEVEL=debug).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kldiff/config.hpp"
#include "kldiff/io.hpp"
#include "kldiff/parallel.hpp"
#include "kldiff/runtime.hpp"
#include "kldiff/torus.hpp"
#include "kldiff/verify.hpp"

#ifndef KLDIFF_VERSION
#define KLDIFF_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using kldiff::ConfigError;
using ojson = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out = "out";
};

kldiff::RunConfig load_config(const Common& c) {
  kldiff::RunConfig cfg = c.config.empty() ? kldiff::RunConfig::defaults() : kldiff::RunConfig::load(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.finalize();
  }
  if (c.threads < 0) throw UsageError("--threads must be >= 0");
  const int threads = kldiff::resolve_threads(c.threads);
  cfg.train.threads = threads;
  cfg.sampler.threads = threads;
  return cfg;
}

std::vector<kldiff::CrystalState> load_dataset(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("no ") + what + " dataset given");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " dataset not found: " + path);
  try {
    return kldiff::read_jsonl(path);
  } catch (const std::exception& e) {
    throw UsageError(std::string("cannot read ") + what + " dataset " + path + ": " + e.what());
  }
}

ojson versions() {
  return {{"kldiff", KLDIFF_VERSION},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

// Collects the files a command writes and finishes with manifest.json.
class Outputs {
 public:
  Outputs(std::string command, const kldiff::RunConfig& cfg, const Common& common)
      : command_(std::move(command)), cfg_(cfg), dir_(common.out), threads_(cfg.train.threads) {}

  const fs::path& dir() const { return dir_; }
  std::string hash() const { return cfg_.hash(); }

  void write(const std::string& name, const std::string& content) {
    kldiff::write_file_atomic(dir_ / name, content);
    artifacts_.push_back({{"file", name}, {"crc64", kldiff::hex64(kldiff::crc64(content))}});
  }

  void write_json(const std::string& name, ojson j) {
    ojson out;
    out["config_hash"] = cfg_.hash();
    out["seed"] = cfg_.seed;
    for (auto& [k, v] : j.items()) out[k] = v;
    write(name, out.dump(2) + "\n");
  }

  void finish(const ojson& inputs, bool passed) {
    write("config.toml", cfg_.to_toml());
    ojson m;
    m["command"] = command_;
    m["config_hash"] = cfg_.hash();
    m["seed"] = cfg_.seed;
    m["threads"] = threads_;
    m["passed"] = passed;
    m["versions"] = versions();
    m["inputs"] = inputs;
    m["artifacts"] = artifacts_;
    m["config"] = cfg_.to_json();
    kldiff::write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  const kldiff::RunConfig& cfg_;
  fs::path dir_;
  int threads_;
  ojson artifacts_ = ojson::array();
};

ojson input_entry(const std::string& path) {
  return {{"path", path}, {"crc64", kldiff::hex64(kldiff::crc64(kldiff::read_file(path)))}};
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------- commands

struct VerifyKernelArgs {
  std::vector<double> times{0.25, 0.5, 1.0, 2.0};
  long n = 100000;
  double dt = 1e-3;
  double v0 = 0.5;
  int prior_n = 10000;
};

int run_verify_kernel(const Common& common, const VerifyKernelArgs& a) {
  auto cfg = load_config(common);
  if (a.n < 2 || a.prior_n < 2 || !(a.dt > 0.0)) throw UsageError("--n, --prior-n and --dt must be positive");
  for (double t : a.times)
    if (!(t > 0.0) || t > cfg.model.sched.horizon) throw UsageError("--t values must lie in (0, T]");
  Outputs out("verify-kernel", cfg, common);

  spdlog::info("simulating {} trajectories with dt = {}", a.n, a.dt);
  const auto kr = kldiff::kernel_check(cfg.model.sched, a.times, a.n, a.dt, a.v0, cfg.seed, cfg.train.threads);
  const auto pr = kldiff::prior_check(cfg.model.sched, a.prior_n, kldiff::mix_seed(cfg.seed + 1));
  const bool kernel_ok = kr.max_abs_z() < 3.0;
  const bool prior_ok =
      pr.ks_pvalue >= 0.01 && std::abs(pr.v_skew) < 0.05 && std::abs(pr.v_excess_kurtosis) < 0.1;

  std::string csv = "t,quantity,expected,observed,se,z\n";
  for (const auto& r : kr.rows)
    csv += fmt_double(r.t) + "," + r.quantity + "," + fmt_double(r.expected) + "," + fmt_double(r.observed) + "," +
           fmt_double(r.se) + "," + fmt_double(r.z) + "\n";
  out.write("kernel_check.csv", csv);
  out.write_json("kernel_check.json",
                 {{"kernel", kr.to_json()}, {"kernel_pass", kernel_ok}, {"prior", pr.to_json()}, {"prior_pass", prior_ok}});
  out.finish(ojson::array(), kernel_ok && prior_ok);
  spdlog::info("max |z| = {:.3f}, prior KS p = {:.3g}", kr.max_abs_z(), pr.ks_pvalue);
  return kernel_ok && prior_ok ? 0 : 1;
}

int run_verify_score(const Common& common, int draws) {
  auto cfg = load_config(common);
  if (draws < 1) throw UsageError("--draws must be >= 1");
  Outputs out("verify-score", cfg, common);
  const auto r = kldiff::score_check(cfg.model.sched, draws, cfg.seed);
  const bool ok = r.max_rel_err_target < 1e-4 && r.max_rel_err_wn < 1e-5 && r.max_abs_err_simplified <= 1e-12;
  out.write_json("score_check.json", {{"report", r.to_json()}, {"pass", ok}});
  out.finish(ojson::array(), ok);
  spdlog::info("target rel err {:.3g}, wn rel err {:.3g}, simplified err {:.3g}", r.max_rel_err_target,
               r.max_rel_err_wn, r.max_abs_err_simplified);
  return ok ? 0 : 1;
}

struct GenDataArgs {
  std::optional<std::string> family;
  std::optional<int> k, count, num_species;
  std::optional<double> jitter;
  std::string name = "data.jsonl";
};

int run_gen_data(const Common& common, const GenDataArgs& a) {
  auto cfg = load_config(common);
  if (a.family) cfg.data.family = kldiff::parse_toy_family(*a.family);
  if (a.k) cfg.data.k = *a.k;
  if (a.count) cfg.data.count = *a.count;
  if (a.num_species) cfg.data.num_species = *a.num_species;
  if (a.jitter) cfg.data.jitter = *a.jitter;
  cfg.finalize();
  if (a.name.empty() || fs::path(a.name).has_parent_path()) throw UsageError("--name must be a plain file name");
  Outputs out("gen-data", cfg, common);
  const auto xs = kldiff::generate_toy(cfg.data);
  std::string text;
  for (const auto& x : xs) text += kldiff::to_json_line(x) + "\n";
  out.write(a.name, text);
  out.finish(ojson::array(), true);
  spdlog::info("wrote {} crystals to {}", xs.size(), (out.dir() / a.name).string());
  return 0;
}

struct TrainArgs {
  std::optional<std::string> train, val;
  std::optional<int> max_steps;
};

int run_train(const Common& common, const TrainArgs& a) {
  auto cfg = load_config(common);
  if (a.train) cfg.paths.train_data = *a.train;
  if (a.val) cfg.paths.val_data = *a.val;
  if (a.max_steps) cfg.train.max_steps = *a.max_steps;
  cfg.finalize();
  const auto train_set = load_dataset(cfg.paths.train_data, "training");
  if (train_set.empty()) throw UsageError("training dataset is empty");
  std::vector<kldiff::CrystalState> val_set;
  if (!cfg.paths.val_data.empty()) val_set = load_dataset(cfg.paths.val_data, "validation");
  try {
    for (const auto& x : train_set) x.validate(cfg.model.num_species);
    for (const auto& x : val_set) x.validate(cfg.model.num_species);
  } catch (const std::exception& e) {
    throw UsageError(std::string("dataset does not fit the model settings: ") + e.what());
  }
  ojson inputs = ojson::array({input_entry(cfg.paths.train_data)});
  if (!cfg.paths.val_data.empty()) inputs.push_back(input_entry(cfg.paths.val_data));

  Outputs out("train", cfg, common);
  kldiff::ModelSpec spec = cfg.model;
  kldiff::TrainConfig tc = cfg.train;
  tc.checkpoint_meta = {{"config_hash", cfg.hash()}, {"config", cfg.to_json()}};
  const fs::path ckpt = out.dir() / "checkpoint.kldc";
  const fs::path metrics = out.dir() / "metrics.csv";
  spdlog::info("training on {} crystals for up to {} steps", train_set.size(), tc.max_steps);
  const auto res = kldiff::train(train_set, val_set, spec, tc, ckpt, metrics);

  ojson rep;
  rep["steps_done"] = res.steps_done;
  rep["diverged"] = res.diverged;
  rep["best_metric"] = res.best_metric >= 0.0 ? ojson(res.best_metric) : ojson(nullptr);
  rep["best_step"] = res.best_step;
  rep["first_step_reaching"] = res.first_step_reaching ? ojson(*res.first_step_reaching) : ojson(nullptr);
  rep["checkpoint_crc64"] = kldiff::hex64(kldiff::crc64(kldiff::read_file(ckpt)));
  rep["metrics_crc64"] = kldiff::hex64(kldiff::crc64(kldiff::read_file(metrics)));
  out.write_json("train_report.json", rep);
  out.finish(inputs, !res.diverged);
  if (res.diverged) spdlog::error("training diverged after step {}; kept the last valid checkpoint", res.steps_done);
  return res.diverged ? 1 : 0;
}

struct SampleArgs {
  std::optional<std::string> checkpoint, ref, scheme, integrator;
  std::optional<int> count, n_steps;
  std::optional<double> tau;
  bool coeff_check = false;
};

int run_sample(const Common& common, const SampleArgs& a) {
  auto cfg = load_config(common);
  if (a.checkpoint) cfg.paths.checkpoint = *a.checkpoint;
  if (a.ref) cfg.paths.test_data = *a.ref;
  if (a.scheme) cfg.sampler.scheme = kldiff::parse_scheme(*a.scheme);
  if (a.integrator) cfg.sampler.integrator = kldiff::parse_integrator(*a.integrator);
  if (a.count) cfg.sample_count = *a.count;
  if (a.n_steps) cfg.sampler.n_steps = *a.n_steps;
  if (a.tau) cfg.sampler.tau = *a.tau;
  if (a.coeff_check) cfg.coeff_check = true;
  cfg.finalize();
  if (cfg.paths.checkpoint.empty()) throw UsageError("no checkpoint given");
  if (!fs::is_regular_file(cfg.paths.checkpoint)) throw UsageError("checkpoint not found: " + cfg.paths.checkpoint);
  kldiff::Checkpoint ck;
  kldiff::ModelSpec spec;
  try {
    ck = kldiff::load_checkpoint(cfg.paths.checkpoint);
    spec = kldiff::ModelSpec::from_json(ck.meta.at("model"));
  } catch (const std::exception& e) {
    throw UsageError("cannot load checkpoint " + cfg.paths.checkpoint + ": " + e.what());
  }
  const auto refs = load_dataset(cfg.paths.test_data, "reference");
  if (refs.empty()) throw UsageError("reference dataset is empty");
  auto comps = kldiff::compositions_of(refs);
  if (cfg.sample_count > 0) {
    std::vector<std::vector<int>> cyc;
    for (int i = 0; i < cfg.sample_count; ++i) cyc.push_back(comps[static_cast<size_t>(i) % comps.size()]);
    comps = std::move(cyc);
  }
  const ojson inputs = ojson::array({input_entry(cfg.paths.checkpoint), input_entry(cfg.paths.test_data)});

  Outputs out("sample", cfg, common);
  const kldiff::NetworkScoreModel model(spec, ck.params);
  kldiff::SampleStats stats;
  spdlog::info("drawing {} samples with {} ({} steps)", comps.size(), kldiff::to_string(cfg.sampler.scheme),
               cfg.sampler.n_steps);
  const auto xs = kldiff::generate(model, comps, cfg.sampler, &stats);
  std::string text;
  for (const auto& x : xs) text += kldiff::to_json_line(x) + "\n";
  out.write("samples.jsonl", text);
  if (stats.corrector_skips > 0) spdlog::warn("skipped {} corrector steps with a zero score", stats.corrector_skips);

  bool ok = true;
  if (cfg.coeff_check) {
    const auto r = kldiff::integrator_coeff_check(model, comps.front(), 2000, 100, 20, 1.0, cfg.seed);
    ok = r.exact_agrees;
    out.write_json("coeff_check.json", {{"t_stop", r.t_stop},
                                        {"n_coarse", r.n_coarse},
                                        {"n_fine", r.n_fine},
                                        {"var_target", r.var_target},
                                        {"var_exact", r.var_exact},
                                        {"var_verbatim", r.var_verbatim},
                                        {"var_fine", r.var_fine},
                                        {"se", r.se},
                                        {"exact_agrees", r.exact_agrees},
                                        {"verbatim_agrees", r.verbatim_agrees}});
    spdlog::info("coefficient check: exact {:.4f}, verbatim {:.4f}, fine {:.4f}", r.var_exact, r.var_verbatim,
                 r.var_fine);
  }
  out.write_json("sample_report.json", {{"scheme", kldiff::to_string(cfg.sampler.scheme)},
                                        {"integrator", kldiff::to_string(cfg.sampler.integrator)},
                                        {"n_steps", cfg.sampler.n_steps},
                                        {"n_samples", xs.size()},
                                        {"corrector_skips", stats.corrector_skips},
                                        {"samples_crc64", kldiff::hex64(kldiff::crc64(text))}});
  out.finish(inputs, ok);
  return ok ? 0 : 1;
}

int run_match(const Common& common, const std::string& pred, const std::string& ref, std::optional<double> tol) {
  auto cfg = load_config(common);
  if (tol) cfg.train.site_tol = *tol;
  cfg.finalize();
  if (!(cfg.train.site_tol > 0.0)) throw UsageError("--tol must be positive");
  const auto p = load_dataset(pred, "predicted");
  const auto r = load_dataset(ref, "reference");
  if (p.size() != r.size())
    throw UsageError("predicted and reference datasets differ in size (" + std::to_string(p.size()) + " vs " +
                     std::to_string(r.size()) + ")");
  const ojson inputs = ojson::array({input_entry(pred), input_entry(ref)});

  Outputs out("match", cfg, common);
  std::string csv = "index,matched,rmse\n";
  for (size_t i = 0; i < p.size(); ++i) {
    const auto m = kldiff::structure_match(p[i], r[i], cfg.train.site_tol);
    csv += std::to_string(i) + "," + (m.matched ? "1" : "0") + "," + (m.rmse ? fmt_double(*m.rmse) : "") + "\n";
  }
  const auto s = kldiff::evaluate_matches(p, r, cfg.train.site_tol);
  out.write("match_pairs.csv", csv);
  out.write_json("match.json", {{"match_rate", s.match_rate},
                                {"rmse_mean", s.rmse_mean ? ojson(*s.rmse_mean) : ojson(nullptr)},
                                {"n", s.n},
                                {"tol", cfg.train.site_tol}});
  out.finish(inputs, true);
  std::cout << ojson{{"match_rate", s.match_rate}, {"rmse_mean", s.rmse_mean ? ojson(*s.rmse_mean) : ojson(nullptr)}}
                   .dump()
            << "\n";
  return 0;
}

struct FrechetArgs {
  int k = 10;
  std::vector<double> sigma2{0.1, 0.7};
  int n = 1000;
  double tol = 0.05;
  int bins = 60;
  std::string mode = "both";
};

int run_frechet(const Common& common, const FrechetArgs& a) {
  auto cfg = load_config(common);
  if (a.k < 1 || a.n < 1 || a.bins < 1 || !(a.tol > 0.0)) throw UsageError("--k, --n, --bins and --tol must be positive");
  for (double s : a.sigma2)
    if (!(s > 0.0)) throw UsageError("--sigma2 values must be positive");
  std::vector<bool> modes;
  if (a.mode == "both") modes = {true, false};
  else if (a.mode == "mean-free") modes = {true};
  else if (a.mode == "plain") modes = {false};
  else throw UsageError("--mode must be mean-free, plain or both");

  Outputs out("frechet-diag", cfg, common);
  ojson reports = ojson::array();
  std::string hist = "mean_free,sigma2,bin_lo,bin_hi,count\n";
  std::string shifts = "mean_free,sigma2,shift\n";
  for (bool mf : modes) {
    kldiff::Rng rng = kldiff::make_stream(cfg.seed, mf ? 1 : 2);
    const auto rep = kldiff::frechet_diagnostic(a.k, a.sigma2, mf, a.n, rng, a.tol, a.bins);
    ojson rows = ojson::array();
    for (const auto& row : rep.rows) {
      rows.push_back({{"sigma2", row.sigma2},
                      {"preserved_fraction", row.preserved_fraction},
                      {"max_residual", row.max_residual},
                      {"discrete", row.discrete}});
      const double w = 2.0 * kldiff::kPi / static_cast<double>(row.histogram.size());
      for (size_t b = 0; b < row.histogram.size(); ++b)
        hist += std::string(mf ? "1" : "0") + "," + fmt_double(row.sigma2) + "," + fmt_double(-kldiff::kPi + b * w) +
                "," + fmt_double(-kldiff::kPi + (b + 1) * w) + "," + std::to_string(row.histogram[b]) + "\n";
      for (double s : row.shifts) shifts += std::string(mf ? "1" : "0") + "," + fmt_double(row.sigma2) + "," + fmt_double(s) + "\n";
    }
    reports.push_back({{"mean_free", mf}, {"k", rep.k}, {"n", rep.n}, {"tol", rep.tol}, {"rows", rows}});
  }
  out.write("frechet_hist.csv", hist);
  out.write("frechet_shifts.csv", shifts);
  out.write_json("frechet_diag.json", {{"reports", reports}});
  out.finish(ojson::array(), true);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  kldiff::tune_allocator();
  auto logger = spdlog::stderr_color_mt("kldiff");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::cfg::load_env_levels();

  CLI::App app{"Kinetic Langevin diffusion for periodic crystal coordinates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KLDIFF_VERSION);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "TOML run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Override the configured seed");
    sub->add_option("--threads", common.threads, "Worker threads (0 = all cores)");
    sub->add_option("--out", common.out, "Output directory");
  };

  VerifyKernelArgs vk;
  auto* s_vk = app.add_subcommand("verify-kernel", "Monte Carlo check of the forward kernel and limiting prior");
  add_common(s_vk);
  s_vk->add_option("--t", vk.times, "Times to compare at");
  s_vk->add_option("--n", vk.n, "Trajectories");
  s_vk->add_option("--dt", vk.dt, "Simulation step");
  s_vk->add_option("--v0", vk.v0, "Initial velocity in every dimension");
  s_vk->add_option("--prior-n", vk.prior_n, "Draws for the limiting-prior test");

  int draws = 1000;
  auto* s_vs = app.add_subcommand("verify-score", "Finite-difference check of the denoising targets");
  add_common(s_vs);
  s_vs->add_option("--draws", draws, "Random configurations");

  GenDataArgs gd;
  auto* s_gd = app.add_subcommand("gen-data", "Write a synthetic toy dataset as JSON lines");
  add_common(s_gd);
  s_gd->add_option("--family", gd.family, "ring-1d, perovskite-like or random-motif");
  s_gd->add_option("--k", gd.k, "Atoms per cell");
  s_gd->add_option("--count", gd.count, "Crystals");
  s_gd->add_option("--num-species", gd.num_species, "Species in the table");
  s_gd->add_option("--jitter", gd.jitter, "Per-atom jitter (fractional units)");
  s_gd->add_option("--name", gd.name, "Output file name inside --out");

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "Train the score network");
  add_common(s_tr);
  s_tr->add_option("--train", tr.train, "Training dataset (JSON lines)");
  s_tr->add_option("--val", tr.val, "Validation dataset (JSON lines)");
  s_tr->add_option("--max-steps", tr.max_steps, "Optimizer steps");

  SampleArgs sa;
  auto* s_sa = app.add_subcommand("sample", "Generate crystals from a checkpoint");
  add_common(s_sa);
  s_sa->add_option("--checkpoint", sa.checkpoint, "Checkpoint file");
  s_sa->add_option("--ref", sa.ref, "Dataset whose compositions are sampled");
  s_sa->add_option("--count", sa.count, "Samples (cycles through the reference compositions)");
  s_sa->add_option("--scheme", sa.scheme, "em or pc");
  s_sa->add_option("--integrator", sa.integrator, "exact or verbatim");
  s_sa->add_option("--n-steps", sa.n_steps, "Reverse steps");
  s_sa->add_option("--tau", sa.tau, "Corrector scale");
  s_sa->add_flag("--coeff-check", sa.coeff_check, "Cross-check the velocity update against fine-step EM");

  std::string pred, ref;
  std::optional<double> tol;
  auto* s_ma = app.add_subcommand("match", "Match rate and RMSE of predictions against references");
  add_common(s_ma);
  s_ma->add_option("--pred", pred, "Predicted crystals")->required();
  s_ma->add_option("--ref", ref, "Reference crystals, same order")->required();
  s_ma->add_option("--tol", tol, "Site tolerance (fractional units)");

  FrechetArgs fa;
  auto* s_fd = app.add_subcommand("frechet-diag", "Frechet-mean preservation under torus noise");
  add_common(s_fd);
  s_fd->add_option("--k", fa.k, "Atoms on the circle");
  s_fd->add_option("--sigma2", fa.sigma2, "Noise variances (radians^2)");
  s_fd->add_option("--n", fa.n, "Noisy draws per variance");
  s_fd->add_option("--tol", fa.tol, "Tolerance in radians");
  s_fd->add_option("--bins", fa.bins, "Histogram bins");
  s_fd->add_option("--mode", fa.mode, "mean-free, plain or both");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*s_vk) return run_verify_kernel(common, vk);
    if (*s_vs) return run_verify_score(common, draws);
    if (*s_gd) return run_gen_data(common, gd);
    if (*s_tr) return run_train(common, tr);
    if (*s_sa) return run_sample(common, sa);
    if (*s_ma) return run_match(common, pred, ref, tol);
    if (*s_fd) return run_frechet(common, fa);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 2;
}
