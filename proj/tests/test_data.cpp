#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "kldiff/data.hpp"
#include "kldiff/io.hpp"
#include "kldiff/torus.hpp"

using namespace kldiff;

namespace {

CrystalState shifted(const CrystalState& x, double dx, double dy, double dz) {
  CrystalState y = x;
  const double d[3] = {dx, dy, dz};
  for (int i = 0; i < x.k(); ++i)
    for (int c = 0; c < 3; ++c) y.f(i, c) = wrap_unit(x.f(i, c) + d[c]).value();
  return y;
}

// Brute-force minimum over all permutations.
double brute_assignment(const Eigen::MatrixXd& cost) {
  std::vector<int> p(static_cast<size_t>(cost.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = 1e300;
  do {
    double c = 0;
    for (size_t i = 0; i < p.size(); ++i) c += cost(static_cast<Eigen::Index>(i), p[i]);
    best = std::min(best, c);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

}  // namespace

TEST(GenerateToy, RingOffsetsAreQuarterSteps) {
  const auto data = generate_toy({.family = ToyFamily::Ring1d, .k = 4, .jitter = 0.0, .count = 20, .seed = 1});
  ASSERT_EQ(data.size(), 20u);
  for (const auto& x : data) {
    ASSERT_EQ(x.k(), 4);
    for (int i = 0; i < 4; ++i) {
      const double step = wrap_unit(x.f((i + 1) % 4, 0) - x.f(i, 0)).value();
      EXPECT_NEAR(step, 0.25, 1e-12);
    }
  }
}

TEST(GenerateToy, DeterministicPerSeed) {
  const ToySpec spec{.family = ToyFamily::RandomMotif, .k = 5, .num_species = 3, .count = 30, .seed = 9};
  const auto a = generate_toy(spec), b = generate_toy(spec);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json_line(a[i]), to_json_line(b[i]));
  ToySpec other = spec;
  other.seed = 10;
  EXPECT_NE(to_json_line(generate_toy(other)[0]), to_json_line(a[0]));
}

TEST(GenerateToy, PerovskiteHasFiveAtoms) {
  const auto data = generate_toy({.family = ToyFamily::PerovskiteLike, .num_species = 6, .count = 50, .seed = 2});
  for (const auto& x : data) {
    EXPECT_EQ(x.k(), 5);
    EXPECT_NO_THROW(x.validate(6));
  }
}

TEST(GenerateToy, RecordsSatisfyInvariants) {
  for (auto fam : {ToyFamily::Ring1d, ToyFamily::RandomMotif}) {
    const auto data = generate_toy({.family = fam, .k = 6, .num_species = 2, .jitter = 0.05, .count = 40, .seed = 3});
    for (const auto& x : data) {
      EXPECT_NO_THROW(x.validate(2));
      EXPECT_GE(x.f.minCoeff(), 0.0);
      EXPECT_LT(x.f.maxCoeff(), 1.0);
    }
  }
  EXPECT_THROW(ToySpec{.jitter = -1.0}.validate(), ConfigError);
}

TEST(JsonLines, RoundTripIsBitIdentical) {
  const auto data = generate_toy({.family = ToyFamily::RandomMotif, .k = 3, .num_species = 4, .count = 25, .seed = 4});
  const auto dir = std::filesystem::temp_directory_path() / "kldiff_test_jsonl";
  std::filesystem::remove_all(dir);
  write_jsonl(dir / "a.jsonl", data);
  const auto back = read_jsonl(dir / "a.jsonl");
  ASSERT_EQ(back.size(), data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].f, data[i].f);
    EXPECT_EQ(back[i].lattice.lengths, data[i].lattice.lengths);
    EXPECT_EQ(back[i].lattice.angles, data[i].lattice.angles);
    EXPECT_EQ(back[i].species, data[i].species);
  }
  write_jsonl(dir / "b.jsonl", back);
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));
  std::filesystem::remove_all(dir);
}

TEST(JsonLines, KeyOrderAndRejection) {
  const auto x = generate_toy({.k = 2, .count = 1, .seed = 5})[0];
  const std::string line = to_json_line(x);
  EXPECT_LT(line.find("\"k\""), line.find("\"f\""));
  EXPECT_LT(line.find("\"f\""), line.find("\"lengths\""));
  EXPECT_LT(line.find("\"angles\""), line.find("\"species\""));
  EXPECT_ANY_THROW(from_json_line(R"({"k":2,"f":[[0.1,0.2,0.3]],"lengths":[1,1,1],"angles":[1,1,1],"species":[0]})"));
  EXPECT_ANY_THROW(from_json_line("not json"));
}

TEST(Assignment, MatchesBruteForce) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 7;
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = uniform01(rng);
    const auto col = solve_assignment(c);
    double got = 0;
    std::vector<int> seen(col);
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < n; ++i) {
      ASSERT_EQ(seen[i], i);
      got += c(i, col[i]);
    }
    ASSERT_NEAR(got, brute_assignment(c), 1e-12);
  }
}

TEST(StructureMatch, Identity) {
  const auto x = generate_toy({.family = ToyFamily::RandomMotif, .k = 6, .num_species = 2, .count = 1, .seed = 7})[0];
  const auto m = structure_match(x, x, 0.05);
  EXPECT_TRUE(m.matched);
  EXPECT_NEAR(*m.rmse, 0.0, 1e-12);
}

TEST(StructureMatch, GlobalShift) {
  const auto x = generate_toy({.family = ToyFamily::RandomMotif, .k = 6, .num_species = 2, .count = 1, .seed = 8})[0];
  const auto m = structure_match(x, shifted(x, 0.37, 0.37, 0.37), 0.05);
  EXPECT_TRUE(m.matched);
  EXPECT_NEAR(*m.rmse, 0.0, 1e-9);
}

TEST(StructureMatch, PermutationInvariant) {
  auto x = generate_toy({.family = ToyFamily::RandomMotif, .k = 5, .num_species = 1, .count = 1, .seed = 9})[0];
  CrystalState y = x;
  for (int i = 0; i < 5; ++i) y.f.row(i) = x.f.row((i + 2) % 5);
  EXPECT_NEAR(*structure_match(x, y).rmse, 0.0, 1e-9);
}

TEST(StructureMatch, LargeNoiseDoesNotMatch) {
  const double tol = 0.05;
  const auto base = generate_toy({.family = ToyFamily::RandomMotif, .k = 8, .num_species = 1, .count = 20, .seed = 10});
  Rng rng(11);
  for (const auto& x : base) {
    CrystalState y = x;
    for (int i = 0; i < y.k(); ++i)
      for (int c = 0; c < 3; ++c) y.f(i, c) = wrap_unit(y.f(i, c) + 10 * tol * standard_normal(rng)).value();
    const auto m = structure_match(x, y, tol);
    EXPECT_FALSE(m.matched);
    EXPECT_GT(*m.rmse, tol);
  }
}

TEST(StructureMatch, MismatchedCompositionIsUndefined) {
  const auto x = generate_toy({.family = ToyFamily::RandomMotif, .k = 4, .num_species = 3, .count = 2, .seed = 12});
  CrystalState y = x[0];
  y.species[0] = (y.species[0] + 1) % 3;
  EXPECT_FALSE(structure_match(x[0], y).matched);
  CrystalState z = x[0];
  z.f.conservativeResize(3, 3);
  z.species.resize(3);
  const auto m = structure_match(x[0], z);
  EXPECT_FALSE(m.matched);
  EXPECT_FALSE(m.rmse.has_value());
}

TEST(StructureMatch, SymmetricInArguments) {
  const auto xs = generate_toy({.family = ToyFamily::RandomMotif, .k = 6, .num_species = 2, .count = 40, .seed = 13});
  for (size_t i = 0; i + 1 < xs.size(); i += 2) {
    CrystalState y = xs[i + 1];
    y.species = xs[i].species;
    const double a = *structure_match(xs[i], y).rmse, b = *structure_match(y, xs[i]).rmse;
    EXPECT_NEAR(a, b, 1e-9);
  }
}

TEST(StructureMatch, TranslationInvariance) {
  const auto x = generate_toy({.family = ToyFamily::RandomMotif, .k = 7, .num_species = 2, .count = 1, .seed = 14})[0];
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    const auto y = shifted(x, uniform01(rng), uniform01(rng), uniform01(rng));
    ASSERT_LT(*structure_match(x, y).rmse, 1e-6);
  }
}

TEST(FrechetDiagnostic, MeanFreeLowNoisePreserves) {
  Rng rng(0);
  const double grid[] = {0.1, 0.7};
  const auto rep = frechet_diagnostic(10, grid, true, 1000, rng);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_GE(rep.rows[0].preserved_fraction, 0.95);
  EXPECT_TRUE(rep.rows[1].discrete);
  EXPECT_LT(rep.rows[1].max_residual, 0.05);
  int total = 0;
  for (int h : rep.rows[0].histogram) total += h;
  EXPECT_EQ(total, 1000);
}

TEST(FrechetDiagnostic, PlainNoiseMovesTheMean) {
  Rng rng(0);
  const double grid[] = {0.1, 0.7};
  const auto rep = frechet_diagnostic(10, grid, false, 1000, rng);
  EXPECT_LT(rep.rows[0].preserved_fraction, 0.5);
  EXPECT_FALSE(rep.rows[0].discrete);
  EXPECT_FALSE(rep.rows[1].discrete);
}
