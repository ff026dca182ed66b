#include "kldiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "kldiff/io.hpp"
#include "kldiff/torus.hpp"

namespace kldiff {

void CrystalState::validate(int num_species) const {
  if (f.rows() < 1) throw std::invalid_argument("crystal: needs at least one atom");
  if (static_cast<Eigen::Index>(species.size()) != f.rows())
    throw std::invalid_argument("crystal: species count differs from atom count");
  for (Eigen::Index i = 0; i < f.size(); ++i)
    if (!(f.data()[i] >= 0.0 && f.data()[i] < 1.0)) throw std::invalid_argument("crystal: coordinate outside [0, 1)");
  for (int s : species)
    if (s < 0 || s >= num_species) throw std::invalid_argument("crystal: species index out of range");
  for (int i = 0; i < 3; ++i) {
    if (!(lattice.lengths[i] > 0.0)) throw std::invalid_argument("crystal: non-positive lattice length");
    if (!(lattice.angles[i] > 0.0 && lattice.angles[i] < kPi))
      throw std::invalid_argument("crystal: lattice angle outside (0, pi)");
  }
}

ToyFamily parse_toy_family(const std::string& name) {
  if (name == "ring-1d") return ToyFamily::Ring1d;
  if (name == "perovskite-like") return ToyFamily::PerovskiteLike;
  if (name == "random-motif") return ToyFamily::RandomMotif;
  throw ConfigError("unknown toy family '" + name + "'");
}

std::string to_string(ToyFamily f) {
  switch (f) {
    case ToyFamily::Ring1d: return "ring-1d";
    case ToyFamily::PerovskiteLike: return "perovskite-like";
    case ToyFamily::RandomMotif: return "random-motif";
  }
  return "?";
}

void ToySpec::validate() const {
  if (family != ToyFamily::PerovskiteLike && k < 1) throw ConfigError("data.k must be >= 1");
  if (num_species < 1) throw ConfigError("data.num_species must be >= 1");
  if (family == ToyFamily::PerovskiteLike && num_species < 5)
    throw ConfigError("perovskite-like data needs num_species >= 5");
  if (!(jitter >= 0.0)) throw ConfigError("data.jitter must be >= 0");
  if (count < 0) throw ConfigError("data.count must be >= 0");
}

namespace {

Lattice toy_lattice(Rng& rng, bool cubic) {
  std::normal_distribution<double> n(0.0, 1.0);
  Lattice lat;
  const double base = std::log(4.0);
  for (int i = 0; i < 3; ++i) {
    lat.lengths[i] = std::exp(base + 0.05 * n(rng));
    lat.angles[i] = cubic ? 0.5 * kPi : 0.5 * kPi + 0.03 * n(rng);
  }
  if (cubic) lat.lengths[1] = lat.lengths[2] = lat.lengths[0];
  return lat;
}

CrystalState place(const AtomArray& motif, std::vector<int> species, double jitter, Rng& rng, bool cubic) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double shift[3];
  for (double& s : shift) s = u(rng);
  CrystalState x;
  x.f.resize(motif.rows(), 3);
  for (Eigen::Index i = 0; i < motif.rows(); ++i)
    for (int d = 0; d < 3; ++d) x.f(i, d) = wrap_unit(motif(i, d) + shift[d] + jitter * n(rng)).value();
  x.species = std::move(species);
  x.lattice = toy_lattice(rng, cubic);
  return x;
}

}  // namespace

std::vector<CrystalState> generate_toy(const ToySpec& spec) {
  spec.validate();
  std::vector<CrystalState> out;
  out.reserve(static_cast<size_t>(spec.count));

  if (spec.family == ToyFamily::PerovskiteLike) {
    AtomArray motif(5, 3);
    motif << 0.0, 0.0, 0.0,  // A (corner)
        0.5, 0.5, 0.5,       // B (body centre)
        0.5, 0.5, 0.0,       // X (face centres)
        0.5, 0.0, 0.5,       //
        0.0, 0.5, 0.5;
    for (int r = 0; r < spec.count; ++r) {
      Rng rng = make_stream(spec.seed, static_cast<std::uint64_t>(r));
      std::uniform_int_distribution<int> pick(0, 1);
      std::vector<int> species{pick(rng), 2 + pick(rng), 4, 4, 4};
      out.push_back(place(motif, std::move(species), spec.jitter, rng, true));
    }
    return out;
  }

  AtomArray motif(spec.k, 3);
  std::vector<int> species(static_cast<size_t>(spec.k));
  if (spec.family == ToyFamily::Ring1d) {
    for (int j = 0; j < spec.k; ++j) {
      motif.row(j) << static_cast<double>(j) / spec.k, 0.0, 0.0;
      species[j] = j % spec.num_species;
    }
  } else {
    Rng motif_rng = make_stream(spec.seed, 0, 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> s(0, spec.num_species - 1);
    for (int j = 0; j < spec.k; ++j) {
      motif.row(j) << u(motif_rng), u(motif_rng), u(motif_rng);
      species[j] = s(motif_rng);
    }
  }
  for (int r = 0; r < spec.count; ++r) {
    Rng rng = make_stream(spec.seed, static_cast<std::uint64_t>(r));
    out.push_back(place(motif, species, spec.jitter, rng, false));
  }
  return out;
}

std::string to_json_line(const CrystalState& x) {
  nlohmann::ordered_json j;
  j["k"] = x.k();
  nlohmann::ordered_json f = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < x.f.rows(); ++i) f.push_back({x.f(i, 0), x.f(i, 1), x.f(i, 2)});
  j["f"] = f;
  j["lengths"] = x.lattice.lengths;
  j["angles"] = x.lattice.angles;
  j["species"] = x.species;
  return j.dump();
}

CrystalState from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  CrystalState x;
  const int k = j.at("k").get<int>();
  const auto& f = j.at("f");
  if (k < 1 || static_cast<int>(f.size()) != k) throw std::runtime_error("crystal record: 'k' disagrees with 'f'");
  x.f.resize(k, 3);
  for (int i = 0; i < k; ++i) {
    if (f[i].size() != 3) throw std::runtime_error("crystal record: coordinates need 3 components");
    for (int d = 0; d < 3; ++d) x.f(i, d) = f[i][d].get<double>();
  }
  x.lattice.lengths = j.at("lengths").get<std::array<double, 3>>();
  x.lattice.angles = j.at("angles").get<std::array<double, 3>>();
  x.species = j.at("species").get<std::vector<int>>();
  if (static_cast<int>(x.species.size()) != k) throw std::runtime_error("crystal record: 'species' length differs from 'k'");
  return x;
}

void write_jsonl(const std::filesystem::path& path, std::span<const CrystalState> xs) {
  std::string s;
  for (const auto& x : xs) {
    s += to_json_line(x);
    s += '\n';
  }
  write_file_atomic(path, s);
}

std::vector<CrystalState> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<CrystalState> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based Hungarian method; index 0 is a sentinel column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  return col;
}

namespace {

constexpr double kForbidden = 1e6;

double pair_cost(const CrystalState& x, const CrystalState& y, int i, int j, const double* delta) {
  double c = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double dd = frac_distance(x.f(i, d) + delta[d], y.f(j, d));
    c += dd * dd;
  }
  return c;
}

// Best mean squared distance found from every same-species anchor.
double match_one_way(const CrystalState& x, const CrystalState& y) {
  const int k = x.k();
  double best = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd cost(k, k);
  std::vector<double> diffs(static_cast<size_t>(k));

  for (int anchor = 0; anchor < k; ++anchor) {
    if (y.species[anchor] != x.species[0]) continue;
    double delta[3];
    for (int d = 0; d < 3; ++d) delta[d] = y.f(anchor, d) - x.f(0, d);
    std::vector<int> perm;
    double total = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 50; ++iter) {
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          cost(i, j) = x.species[i] == y.species[j] ? pair_cost(x, y, i, j, delta) : kForbidden;
      std::vector<int> next = solve_assignment(cost);
      const bool stable = next == perm;
      perm = std::move(next);
      if (stable) break;
      for (int d = 0; d < 3; ++d) {
        for (int i = 0; i < k; ++i) diffs[i] = kTwoPi * (y.f(perm[i], d) - x.f(i, d));
        delta[d] = frechet_mean(std::span<const double>(diffs)).mean.value() / kTwoPi;
      }
      total = 0.0;
      for (int i = 0; i < k; ++i) total += pair_cost(x, y, i, perm[i], delta);
    }
    best = std::min(best, total / k);
  }
  return best;
}

}  // namespace

MatchResult structure_match(const CrystalState& x, const CrystalState& y, double site_tol) {
  MatchResult r;
  if (x.k() != y.k() || x.k() < 1) return r;
  std::vector<int> sx = x.species, sy = y.species;
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());
  if (sx != sy) return r;
  const double msd = std::min(match_one_way(x, y), match_one_way(y, x));
  r.rmse = std::sqrt(msd);
  r.matched = *r.rmse <= site_tol;
  return r;
}

FrechetDiagReport frechet_diagnostic(int k, std::span<const double> sigma2_grid, bool mean_free, int n, Rng& rng,
                                     double tol, int n_bins) {
  if (k < 1 || n < 1 || n_bins < 1) throw std::invalid_argument("frechet_diagnostic: k, n and n_bins must be >= 1");
  FrechetDiagReport rep;
  rep.k = k;
  rep.mean_free = mean_free;
  rep.n = n;
  rep.tol = tol;

  std::vector<double> clean(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) clean[j] = k == 1 ? 0.0 : -0.5 * kPi + kPi * j / (k - 1);
  const double clean_mean = frechet_mean(std::span<const double>(clean)).mean.value();
  const double spacing = kTwoPi / k;

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> r(static_cast<size_t>(k)), noisy(static_cast<size_t>(k));
  for (double s2 : sigma2_grid) {
    if (s2 < 0.0) throw std::domain_error("frechet_diagnostic: negative variance");
    FrechetDiagRow row;
    row.sigma2 = s2;
    row.histogram.assign(static_cast<size_t>(n_bins), 0);
    int preserved = 0;
    const double sd = std::sqrt(s2);
    for (int rep_i = 0; rep_i < n; ++rep_i) {
      double mean = 0.0;
      for (int j = 0; j < k; ++j) {
        r[j] = sd * normal(rng);
        mean += r[j];
      }
      mean /= k;
      for (int j = 0; j < k; ++j) noisy[j] = wrap_angle(clean[j] + (mean_free ? r[j] - mean : r[j])).value();
      const double m = frechet_mean(std::span<const double>(noisy)).mean.value();
      const double shift = wrap_angle(m - clean_mean).value();
      row.shifts.push_back(shift);
      if (std::abs(shift) < tol) ++preserved;
      const double q = shift / spacing;
      row.max_residual = std::max(row.max_residual, std::abs(q - std::round(q)) * spacing);
      const int bin = std::clamp(static_cast<int>((shift + kPi) / kTwoPi * n_bins), 0, n_bins - 1);
      ++row.histogram[bin];
    }
    row.preserved_fraction = static_cast<double>(preserved) / n;
    row.discrete = row.max_residual < tol;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace kldiff
