#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kldiff/euclidean.hpp"
#include "kldiff/rng.hpp"
#include "kldiff/types.hpp"

namespace kldiff {

/// One unit cell: fractional coordinates, lattice and species indices.
struct CrystalState {
  AtomArray f;
  Lattice lattice;
  std::vector<int> species;

  int k() const { return static_cast<int>(f.rows()); }
  /// Throws std::invalid_argument when an invariant is violated.
  void validate(int num_species) const;
};

enum class ToyFamily { Ring1d, PerovskiteLike, RandomMotif };

ToyFamily parse_toy_family(const std::string& name);
std::string to_string(ToyFamily f);

struct ToySpec {
  ToyFamily family = ToyFamily::Ring1d;
  int k = 4;            // ignored by perovskite-like, which always has 5 sites
  int num_species = 1;
  double jitter = 0.01;  // fractional units
  int count = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic per (spec, seed). Every record carries an independent
/// uniform global shift so that only relative positions are informative.
std::vector<CrystalState> generate_toy(const ToySpec& spec);

std::string to_json_line(const CrystalState& x);
CrystalState from_json_line(const std::string& line);
void write_jsonl(const std::filesystem::path& path, std::span<const CrystalState> xs);
std::vector<CrystalState> read_jsonl(const std::filesystem::path& path);

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method). Returns col[i] assigned to row i.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

struct MatchResult {
  bool matched = false;
  std::optional<double> rmse;  // empty when K or species differ
};

/// Root-mean-square geodesic torus distance between x and y after the best
/// global translation and species-preserving permutation. Alternates an
/// optimal assignment with the exact per-dimension optimal translation
/// (a circular Frechet mean of the matched differences), seeded from every
/// same-species anchor, and symmetrized as min over both argument orders.
MatchResult structure_match(const CrystalState& x, const CrystalState& y, double site_tol = 0.05);

struct FrechetDiagRow {
  double sigma2 = 0.0;
  double preserved_fraction = 0.0;  // |shift| < tol
  double max_residual = 0.0;        // worst distance of a shift to a multiple of 2 pi / K
  bool discrete = false;            // max_residual < tol
  std::vector<double> shifts;       // radians, in [-pi, pi)
  std::vector<int> histogram;       // shifts binned uniformly over [-pi, pi)
};

struct FrechetDiagReport {
  int k = 10;
  bool mean_free = true;
  int n = 1000;
  double tol = 0.05;
  std::vector<FrechetDiagRow> rows;
};

/// 1-D study of how noise moves the circular Frechet mean of a clean
/// configuration (K atoms evenly spaced over [-pi/2, pi/2]). Noise is
/// N(0, sigma2) per atom in radians, projected to zero sum when mean_free.
FrechetDiagReport frechet_diagnostic(int k, std::span<const double> sigma2_grid, bool mean_free, int n, Rng& rng,
                                     double tol = 0.05, int n_bins = 60);

}  // namespace kldiff
