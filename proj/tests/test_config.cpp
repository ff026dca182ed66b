#include <gtest/gtest.h>

#include "kldiff/config.hpp"

using namespace kldiff;

TEST(ParseToml, ScalarsArraysAndSections) {
  const auto j = parse_toml(R"(
# comment
seed = 5
name = "a \"quoted\" # not a comment"
[train]
lr = 1e-3   # trailing comment
flag = true
grid = [0.1, 0.7]
n = -3
)");
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["name"], "a \"quoted\" # not a comment");
  EXPECT_DOUBLE_EQ(j["train"]["lr"].get<double>(), 1e-3);
  EXPECT_EQ(j["train"]["flag"], true);
  EXPECT_EQ(j["train"]["grid"].size(), 2u);
  EXPECT_EQ(j["train"]["n"], -3);
  EXPECT_TRUE(j["train"]["n"].is_number_integer());
}

TEST(ParseToml, RejectsMalformedInput) {
  EXPECT_THROW(parse_toml("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("[x]\n[x]\n"), ConfigError);
  EXPECT_THROW(parse_toml("[[x]]\n"), ConfigError);
  EXPECT_THROW(parse_toml("a = \n"), ConfigError);
  EXPECT_THROW(parse_toml("a = \"open\n"), ConfigError);
  EXPECT_THROW(parse_toml("just words\n"), ConfigError);
}

TEST(RunConfig, DefaultsAreValid) {
  RunConfig c = RunConfig::defaults();
  EXPECT_NO_THROW(c.finalize());
  EXPECT_EQ(c.model.sched.n_steps, 1000);
  EXPECT_EQ(c.model.sched.horizon, 2.0);
  EXPECT_EQ(c.model.sched.gamma, 1.0);
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(RunConfig, SeedPropagates) {
  const RunConfig c = RunConfig::from_toml("seed = 42\n");
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.sampler.seed, 42u);
  EXPECT_EQ(c.data.seed, 42u);
}

TEST(RunConfig, UnknownKeysAndSectionsRejected) {
  EXPECT_THROW(RunConfig::from_toml("[train]\nlearning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("[optimizer]\nlr = 0.1\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("sed = 1\n"), ConfigError);
}

TEST(RunConfig, TypeMismatchesRejected) {
  EXPECT_THROW(RunConfig::from_toml("[train]\nbatch_size = \"64\"\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("[train]\nbatch_size = 6.5\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("[model]\nmean_free = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("[sampler]\nscheme = \"rk4\"\n"), ConfigError);
}

TEST(RunConfig, InvalidCombinationsRejected) {
  EXPECT_THROW(RunConfig::from_toml("[model]\nparam = \"simplified\"\nv0_variance = 1.0\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("[schedule]\nn_steps = 5\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_toml("[train]\nlambda_mc = 100\n"), ConfigError);
}

TEST(RunConfig, TomlRoundTripPreservesEverything) {
  const RunConfig a = RunConfig::from_toml(R"(
seed = 9
[net]
hidden_dim = 24
[model]
param = "direct"
v0_variance = 1.0
[train]
target_metric = 0.9
lambda_a = 3.0
[sampler]
scheme = "pc"
tau = 0.3
[data]
family = "random-motif"
num_species = 3
[paths]
checkpoint = "x/y.kldc"
)");
  const RunConfig b = RunConfig::from_toml(a.to_toml());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(b.model.param, ScoreParam::Direct);
  EXPECT_EQ(*b.train.target_metric, 0.9);
  EXPECT_EQ(b.paths.checkpoint, "x/y.kldc");
}

TEST(RunConfig, HashTracksResultsNotPaths) {
  const RunConfig a = RunConfig::from_toml("[paths]\ncheckpoint = \"a.kldc\"\n");
  const RunConfig b = RunConfig::from_toml("[paths]\ncheckpoint = \"b.kldc\"\n");
  const RunConfig c = RunConfig::from_toml("[train]\nlr = 0.002\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

TEST(RunConfig, ShippedRingConfigLoads) {
  const RunConfig c = RunConfig::load(KLDIFF_SOURCE_DIR "/configs/ring1d.toml");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.model.net.hidden_dim, 32);
  EXPECT_EQ(c.data.k, 4);
  EXPECT_EQ(c.sampler.scheme, Scheme::PC);
}
