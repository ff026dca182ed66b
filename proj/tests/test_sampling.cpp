#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "kldiff/sampling.hpp"
#include "kldiff/torus.hpp"
#include "kldiff/verify.hpp"

using namespace kldiff;

namespace {

ModelSpec base_spec() {
  ModelSpec spec;
  spec.net.hidden_dim = 8;
  spec.net.n_layers = 2;
  spec.net.time_embed_dim = 4;
  spec.net.n_freq = 2;
  return spec;
}

// Score of a zero-velocity forward process whose data positions are
// uniform: only the closed-form -v / sigma2_v part survives.
class UniformDataScore final : public ScoreModel {
 public:
  explicit UniformDataScore(ModelSpec spec) : spec_(std::move(spec)) {}
  const ModelSpec& spec() const override { return spec_; }
  ScoreEval evaluate(const GraphBatch& b, double t) const override {
    return {-b.v / spec_.sched.sigma2_v(t), RowMatrix::Zero(b.num_graphs(), 6),
            RowMatrix::Zero(b.f.rows(), spec_.net.type_channels)};
  }

 private:
  ModelSpec spec_;
};

class ZeroScore final : public ScoreModel {
 public:
  explicit ZeroScore(ModelSpec spec) : spec_(std::move(spec)) {}
  const ModelSpec& spec() const override { return spec_; }
  ScoreEval evaluate(const GraphBatch& b, double) const override {
    return {AtomArray::Zero(b.f.rows(), 3), RowMatrix::Zero(b.num_graphs(), 6),
            RowMatrix::Zero(b.f.rows(), spec_.net.type_channels)};
  }

 private:
  ModelSpec spec_;
};

CrystalState delta_crystal() {
  CrystalState x;
  x.f.resize(3, 3);
  x.f << 0.5, 0.5, 0.5, 0.2, 0.7, 0.4, 0.9, 0.1, 0.6;
  x.species = {0, 0, 0};
  return x;
}

// Median geodesic error in radians over all coordinates of all samples.
double median_error(const std::vector<CrystalState>& xs, const CrystalState& ref) {
  std::vector<double> e;
  for (const auto& x : xs)
    for (int i = 0; i < x.k(); ++i)
      for (int d = 0; d < 3; ++d) e.push_back(kTwoPi * frac_distance(x.f(i, d), ref.f(i, d)));
  std::nth_element(e.begin(), e.begin() + e.size() / 2, e.end());
  return e[e.size() / 2];
}

std::vector<std::vector<int>> repeat(std::vector<int> comp, int n) { return std::vector<std::vector<int>>(n, comp); }

}  // namespace

TEST(Corrector, StepSizeExample) {
  const AtomArray s = AtomArray::Constant(2, 3, 2.0);
  const double delta = corrector_step_size(0.5, s);
  EXPECT_DOUBLE_EQ(delta, 0.125);
  EXPECT_DOUBLE_EQ(std::sqrt(2.0 * delta), 0.5);
  EXPECT_EQ(corrector_step_size(0.5, AtomArray::Zero(2, 3)), 0.0);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig c;
  c.n_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.scheme = Scheme::PC;
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SampleEm, ZeroScoreWithoutNoiseIsPureExponentialGrowth) {
  ModelSpec spec = base_spec();
  const ZeroScore model(spec);
  SamplerConfig cfg;
  cfg.n_steps = 50;
  cfg.inject_noise = false;
  const double grow = std::exp(spec.sched.horizon / cfg.n_steps);
  AtomArray prev;
  int checked = 0;
  cfg.observer = [&](int, std::string_view stage, const AtomArray&, const AtomArray& v, const std::vector<int>&) {
    if (stage == "step") {
      ASSERT_LT((v - grow * prev).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()));
      ++checked;
    }
    prev = v;
  };
  sample_em(model, repeat({0, 0, 0}, 4), cfg);
  EXPECT_EQ(checked, 50);
}

TEST(SampleEm, SingleAtomMeanFreeStaysAtPrior) {
  ModelSpec spec = base_spec();
  Rng rng(1);
  const NetworkScoreModel model(spec, init_params(spec.net, rng));
  for (Scheme scheme : {Scheme::EM, Scheme::PC}) {
    SamplerConfig cfg;
    cfg.scheme = scheme;
    cfg.n_steps = 40;
    AtomArray prior;
    cfg.observer = [&](int, std::string_view stage, const AtomArray& f, const AtomArray& v, const std::vector<int>&) {
      if (stage == "prior") prior = f;
      ASSERT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
      ASSERT_EQ(f, prior);
    };
    const auto out = generate(model, repeat({0}, 5), cfg);
    ASSERT_EQ(out.size(), 5u);
  }
}

TEST(Samplers, StayOnTorusAndMeanFreeAtEveryStage) {
  ModelSpec spec = base_spec();
  Rng rng(2);
  const NetworkScoreModel model(spec, init_params(spec.net, rng));
  for (Scheme scheme : {Scheme::EM, Scheme::PC}) {
    SamplerConfig cfg;
    cfg.scheme = scheme;
    cfg.n_steps = 30;
    cfg.n_corrector = 2;
    cfg.chunk = 3;
    long events = 0;
    cfg.observer = [&](int, std::string_view, const AtomArray& f, const AtomArray& v, const std::vector<int>& sizes) {
      ASSERT_GE(f.minCoeff(), 0.0);
      ASSERT_LT(f.maxCoeff(), 1.0);
      int o = 0;
      for (int k : sizes) {
        ASSERT_LT(v.middleRows(o, k).colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
        o += k;
      }
      ++events;
    };
    const std::vector<std::vector<int>> comps{{0, 0, 0, 0}, {0, 0}, {0, 0, 0, 0, 0}, {0, 0, 0}};
    const auto out = generate(model, comps, cfg);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[2].k(), 5);
    EXPECT_GT(events, 30);
  }
}

TEST(Samplers, DeterministicAndThreadIndependent) {
  ModelSpec spec = base_spec();
  Rng rng(3);
  const NetworkScoreModel model(spec, init_params(spec.net, rng));
  for (Scheme scheme : {Scheme::EM, Scheme::PC}) {
    SamplerConfig cfg;
    cfg.scheme = scheme;
    cfg.n_steps = 20;
    cfg.chunk = 2;
    cfg.seed = 11;
    const auto comps = repeat({0, 0, 0}, 7);
    const auto a = generate(model, comps, cfg);
    const auto b = generate(model, comps, cfg);
    cfg.threads = 3;
    const auto c = generate(model, comps, cfg);
    for (size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(to_json_line(a[i]), to_json_line(b[i]));
      EXPECT_EQ(to_json_line(a[i]), to_json_line(c[i]));
    }
  }
}

TEST(Samplers, DeltaScoreConcentratesNearDataPoint) {
  ModelSpec spec = base_spec();
  spec.mean_free = false;
  spec.standardize = false;
  const CrystalState data = delta_crystal();
  const DeltaScoreModel model(spec, data);
  SamplerConfig cfg;
  cfg.n_steps = 500;
  cfg.seed = 4;
  const auto comps = repeat({0, 0, 0}, 100);
  const double em = median_error(sample_em(model, comps, cfg), data);
  cfg.scheme = Scheme::PC;
  const double pc = median_error(sample_pc(model, comps, cfg), data);
  EXPECT_LT(em, 0.1);
  EXPECT_LE(pc, em);
}

TEST(Samplers, EmAndPcAgreeInDistributionAtFineGrids) {
  ModelSpec spec = base_spec();
  spec.mean_free = false;
  spec.standardize = false;
  CrystalState data;
  data.f = AtomArray::Constant(1, 3, 0.5);
  data.species = {0};
  const DeltaScoreModel model(spec, data);
  SamplerConfig cfg;
  cfg.n_steps = 2000;
  cfg.chunk = 1024;
  cfg.seed = 5;
  const auto comps = repeat({0}, 10000);
  const auto em = sample_em(model, comps, cfg);
  cfg.scheme = Scheme::PC;
  const auto pc = sample_pc(model, comps, cfg);
  // W1 between the empirical marginals of the first coordinate (the data
  // point sits at 0.5, far from the wrap).
  std::vector<double> a, b;
  for (size_t i = 0; i < em.size(); ++i) {
    a.push_back(em[i].f(0, 0));
    b.push_back(pc[i].f(0, 0));
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double w1 = 0;
  for (size_t i = 0; i < a.size(); ++i) w1 += std::abs(a[i] - b[i]);
  EXPECT_LT(w1 / a.size(), 0.02);
}

TEST(Samplers, UniformDataGivesUniformPositions) {
  ModelSpec spec = base_spec();
  spec.mean_free = false;
  const UniformDataScore model(spec);
  SamplerConfig cfg;
  cfg.n_steps = 200;
  cfg.seed = 6;
  const auto out = sample_em(model, repeat({0}, 10000), cfg);
  std::vector<double> f;
  for (const auto& x : out) f.push_back(x.f(0, 0));
  std::sort(f.begin(), f.end());
  double d = 0;
  const double n = static_cast<double>(f.size());
  for (size_t i = 0; i < f.size(); ++i) d = std::max({d, (i + 1) / n - f[i], f[i] - i / n});
  EXPECT_GT(ks_pvalue(d, static_cast<long>(f.size())), 0.01);
}

TEST(CoeffCheck, ExactIntegratorAgreesVerbatimDoesNot) {
  ModelSpec spec = base_spec();
  spec.mean_free = false;
  spec.standardize = false;
  const DeltaScoreModel model(spec, delta_crystal());
  const auto r = integrator_coeff_check(model, {0, 0, 0}, 2000, 100, 20, 1.0, 7);
  EXPECT_TRUE(r.exact_agrees) << r.var_exact << " vs " << r.var_fine;
  EXPECT_FALSE(r.verbatim_agrees) << r.var_verbatim << " vs " << r.var_fine;
  EXPECT_NEAR(r.var_fine, r.var_target, 0.05);
}

TEST(DeltaScoreModel, RequiresPlainZeroVelocitySetup) {
  ModelSpec spec = base_spec();
  EXPECT_ANY_THROW(DeltaScoreModel(spec, delta_crystal()));
}
