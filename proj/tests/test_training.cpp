#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "kldiff/io.hpp"
#include "kldiff/training.hpp"
#include "support.hpp"

using namespace kldiff;

namespace {

ModelSpec small_spec(int num_species = 1) {
  ModelSpec spec;
  spec.sched.n_steps = 100;
  spec.net.hidden_dim = 16;
  spec.net.n_layers = 2;
  spec.net.time_embed_dim = 8;
  spec.net.n_freq = 4;
  spec.num_species = num_species;
  spec.net.type_channels = type_channels(spec.type_mode, num_species);
  return spec;
}

TrainConfig small_train(int steps) {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_steps = steps;
  cfg.log_every = 10;
  cfg.eval_every = 0;
  cfg.seed = 3;
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kldiff_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Lambda, PositiveFiniteAndUnitNearHorizon) {
  KineticSchedule s;
  s.n_steps = 20;
  const auto tab = precompute_lambda(s, InitialVelocity{}, false, 2, 20000, 1);
  ASSERT_EQ(tab.values.size(), 21u);
  for (double v : tab.values) {
    EXPECT_GT(v, 0.0);
    EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_NEAR(tab.at(20), 1.0, 0.03);
  // Small t has large scores, hence small weights.
  EXPECT_LT(tab.at(1), 0.5 * tab.at(20));
}

TEST(Lambda, ReproducibleAcrossSeeds) {
  KineticSchedule s;
  s.n_steps = 4;  // grid index 1 is t = 0.5
  const auto a = precompute_lambda(s, InitialVelocity{}, true, 4, 100000, 1);
  const auto b = precompute_lambda(s, InitialVelocity{}, true, 4, 100000, 2);
  EXPECT_NEAR(a.at(1) / b.at(1), 1.0, 0.02);
  const auto c = precompute_lambda(s, InitialVelocity{}, true, 4, 1000, 1);
  const auto d = precompute_lambda(s, InitialVelocity{}, true, 4, 1000, 1);
  EXPECT_EQ(c.values, d.values);
}

TEST(Lambda, RejectsTooFewDraws) {
  EXPECT_THROW(precompute_lambda(KineticSchedule{}, InitialVelocity{}, true, 4, 999, 1), std::invalid_argument);
}

TEST(Lambda, EqualizesLossAcrossTimeDeciles) {
  KineticSchedule s;
  s.n_steps = 200;
  const int k = 4;
  const auto tab = precompute_lambda(s, InitialVelocity{}, true, k, 1000, 4);
  Rng rng(5);
  std::uniform_int_distribution<int> pick(1, s.n_steps);
  double sum[10] = {}, cnt[10] = {};
  const AtomArray f0 = AtomArray::Zero(k, 3), v0 = AtomArray::Zero(k, 3);
  for (int m = 0; m < 10000; ++m) {
    const int i = pick(rng);
    const double t = training_time(s, i);
    const auto x = sample_transition(f0, v0, t, s, true, rng);
    const int dec = std::min(9, (i - 1) * 10 / s.n_steps);
    sum[dec] += tab.at(i) * target_score(x, v0, s, true).squaredNorm() / (3.0 * k);
    cnt[dec] += 1;
  }
  double lo = 1e300, hi = 0;
  for (int d = 0; d < 10; ++d) {
    lo = std::min(lo, sum[d] / cnt[d]);
    hi = std::max(hi, sum[d] / cnt[d]);
  }
  EXPECT_LT(hi / lo, 2.0);
}

TEST(TrainingTargets, NearIdentityAtTmin) {
  ModelSpec spec = small_spec();
  const auto x = generate_toy({.k = 4, .count = 1, .seed = 1})[0];
  Rng rng(1);
  const auto ex = make_training_targets(x, spec.sched.t_min, spec, rng);
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < 3; ++d) EXPECT_LT(frac_distance(ex.f_t(i, d), x.f(i, d)), 1e-3);
  EXPECT_TRUE(ex.target_v.allFinite());
  EXPECT_TRUE(ex.target_l.allFinite());
  EXPECT_NEAR(ex.u, spec.sched.t_min / spec.sched.horizon, 1e-15);
}

TEST(TrainingTargets, CspHasNoTypeChannel) {
  ModelSpec spec = small_spec(3);
  const auto x = generate_toy({.family = ToyFamily::RandomMotif, .k = 4, .num_species = 3, .count = 1, .seed = 2})[0];
  Rng rng(2);
  const auto ex = make_training_targets(x, 0.7, spec, rng);
  EXPECT_EQ(ex.target_a.size(), 0);
  EXPECT_EQ(ex.a_in, encode_types(x.species, 3, AtomTypeMode::OneHot));

  spec.task = Task::DNG;
  Rng rng2(2);
  const auto dng = make_training_targets(x, 0.7, spec, rng2);
  EXPECT_EQ(dng.target_a.rows(), 4);
  EXPECT_EQ(dng.target_a.cols(), 3);
}

TEST(TrainingTargets, DeterministicPerSeed) {
  const ModelSpec spec = small_spec();
  const auto x = generate_toy({.k = 4, .count = 1, .seed = 3})[0];
  Rng a(9), b(9);
  const auto ea = make_training_targets(x, 1.1, spec, a);
  const auto eb = make_training_targets(x, 1.1, spec, b);
  EXPECT_EQ(ea.f_t, eb.f_t);
  EXPECT_EQ(ea.v_t, eb.v_t);
  EXPECT_EQ(ea.l_t, eb.l_t);
  EXPECT_EQ(ea.target_v, eb.target_v);
  EXPECT_EQ(ea.target_l, eb.target_l);
}

TEST(AdamW, FirstStepByHand) {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg, 2);
  Vector p(2), g(2);
  p << 1.0, -2.0;
  g << 0.3, -4.0;
  opt.step(p, g);
  // Bias-corrected moments equal g and g^2 after one step.
  EXPECT_NEAR(p[0], 1.0 * (1 - 0.05) - 0.1 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(p[1], -2.0 * (1 - 0.05) + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(LossGradients, SmallStepDecreasesFrozenBatchLoss) {
  const NetConfig cfg = small_spec().net;
  Rng rng(4);
  const ScoreNetParams p = init_params(cfg, rng);
  const GraphBatch b = kldiff::testing::random_batch(cfg, {4, 4, 4}, rng);
  const LossTargets t = kldiff::testing::random_targets(cfg, b, rng, false);
  const auto lg = loss_gradients(b, t, p, cfg);
  ScoreNetParams q = p;
  q.values -= 1e-4 * lg.grad;
  EXPECT_LT(loss_value(b, t, q, cfg).total, lg.loss.total);
}

TEST(Train, SingleAtomMeanFreeTorusLossIsZero) {
  ModelSpec spec = small_spec();
  const auto data = generate_toy({.k = 1, .count = 10, .seed = 4});
  const auto res = train(data, {}, spec, small_train(20));
  ASSERT_FALSE(res.log.empty());
  for (const auto& row : res.log) {
    EXPECT_EQ(row.loss_v, 0.0);
    EXPECT_GT(row.loss_l, 0.0);
  }
}

TEST(Train, LossDecreasesOverFirstFiftySteps) {
  ModelSpec spec = small_spec();
  spec.net.hidden_dim = 32;
  const auto data = generate_toy({.k = 4, .count = 200, .seed = 5});
  TrainConfig cfg = small_train(50);
  cfg.batch_size = 64;
  const auto res = train(data, {}, spec, cfg);
  ASSERT_EQ(res.log.size(), 5u);
  for (size_t i = 1; i < res.log.size(); ++i) EXPECT_LT(res.log[i].loss_total, res.log[i - 1].loss_total) << i;
}

TEST(Train, DeterministicAcrossRunsAndThreads) {
  const auto data = generate_toy({.k = 4, .count = 50, .seed = 6});
  const auto val = generate_toy({.k = 4, .count = 5, .seed = 7});
  const auto dir = scratch("train_det");
  TrainConfig cfg = small_train(40);
  cfg.eval_every = 20;
  cfg.eval_samples = 5;
  std::string ck[3], csv[3];
  for (int r = 0; r < 3; ++r) {
    ModelSpec spec = small_spec();
    cfg.threads = r == 2 ? 2 : 1;
    const auto p = dir / std::to_string(r);
    train(data, val, spec, cfg, p / "ck.kldc", p / "metrics.csv");
    ck[r] = read_file(p / "ck.kldc");
    csv[r] = read_file(p / "metrics.csv");
  }
  EXPECT_EQ(ck[0], ck[1]);
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(ck[0], ck[2]);
  EXPECT_EQ(csv[0], csv[2]);
  EXPECT_EQ(csv[0].substr(0, csv[0].find('\n') + 1), metrics_csv_header());
  std::filesystem::remove_all(dir);
}

TEST(Train, StopsAtTargetAndRecordsStep) {
  ModelSpec spec = small_spec();
  const auto data = generate_toy({.k = 4, .count = 20, .seed = 8});
  TrainConfig cfg = small_train(100);
  cfg.eval_every = 10;
  cfg.eval_samples = 4;
  cfg.target_metric = 0.0;
  cfg.stop_at_target = true;
  const auto res = train(data, data, spec, cfg);
  ASSERT_TRUE(res.first_step_reaching.has_value());
  EXPECT_EQ(*res.first_step_reaching, 10);
  EXPECT_EQ(res.steps_done, 10);
}

TEST(Train, CheckpointCarriesMeta) {
  ModelSpec spec = small_spec();
  const auto data = generate_toy({.k = 4, .count = 20, .seed = 9});
  TrainConfig cfg = small_train(5);
  cfg.checkpoint_meta["config_hash"] = "abc";
  const auto dir = scratch("train_meta");
  const auto res = train(data, {}, spec, cfg, dir / "ck.kldc");
  const Checkpoint ck = load_checkpoint(dir / "ck.kldc");
  EXPECT_EQ(ck.meta["config_hash"], "abc");
  EXPECT_EQ(ck.meta["step"], 5);
  EXPECT_EQ(ck.params.values, res.params.values);
  const ModelSpec back = ModelSpec::from_json(ck.meta["model"]);
  EXPECT_EQ(back.to_json().dump(), spec.to_json().dump());
  std::filesystem::remove_all(dir);
}

TEST(Train, RejectsBadSettings) {
  const auto data = generate_toy({.k = 4, .count = 5, .seed = 10});
  ModelSpec spec = small_spec();
  spec.sched.n_steps = 9;
  EXPECT_THROW(train(data, {}, spec, small_train(1)), ConfigError);
  ModelSpec ok = small_spec();
  TrainConfig cfg = small_train(1);
  cfg.lambda_mc = 10;
  EXPECT_THROW(train(data, {}, ok, cfg), ConfigError);
  EXPECT_THROW(train({}, {}, ok, small_train(1)), std::invalid_argument);
  ModelSpec bad = small_spec();
  bad.v0 = {InitialVelocity::Kind::Gaussian, 1.0};
  EXPECT_THROW(train(data, {}, bad, small_train(1)), ConfigError);
}

TEST(EvaluateMatches, CountsAndMeans) {
  const auto refs = generate_toy({.family = ToyFamily::RandomMotif, .k = 4, .count = 4, .seed = 11});
  std::vector<CrystalState> gen = refs;
  gen[1].f = AtomArray::Constant(4, 3, 0.5);
  const auto m = evaluate_matches(gen, refs, 0.05);
  EXPECT_EQ(m.n, 4);
  EXPECT_DOUBLE_EQ(m.match_rate, 0.75);
  EXPECT_NEAR(*m.rmse_mean, 0.0, 1e-9);
  EXPECT_THROW(evaluate_matches(std::span(gen).first(2), refs, 0.05), std::invalid_argument);
}
