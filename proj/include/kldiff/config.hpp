#pragma once

// Run configuration: one TOML document with the sections
//
//   seed = 0
//   [schedule] [vp] [net] [model] [train] [sampler] [data] [paths]
//
// Every key has a default (see RunConfig::to_toml for the full list) and
// unknown sections or keys are rejected. Only the TOML subset needed here
// is understood: comments, single-level [section] tables, and key = value
// pairs whose value is a string, integer, float, boolean or a one-line
// array of those.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "kldiff/data.hpp"
#include "kldiff/model.hpp"
#include "kldiff/sampling.hpp"
#include "kldiff/training.hpp"

namespace kldiff {

/// Parses the TOML subset into {section: {key: value}}; top-level keys stay
/// at the root. Throws ConfigError with a line number on malformed input.
nlohmann::ordered_json parse_toml(const std::string& text);

struct RunPaths {
  std::string train_data;
  std::string val_data;
  std::string test_data;
  std::string checkpoint;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelSpec model;        // [schedule] [vp] [net] [model]
  TrainConfig train;      // [train]
  SamplerConfig sampler;  // [sampler]
  int sample_count = 0;   // [sampler] count; 0 = one sample per reference crystal
  bool coeff_check = false;  // [sampler] also run integrator_coeff_check when sampling
  ToySpec data;           // [data]
  RunPaths paths;         // [paths]

  /// Copies `seed` into the train, sampler and data settings and checks
  /// every section. Throws ConfigError.
  void finalize();

  /// Full resolved document, sections in a fixed order.
  nlohmann::ordered_json to_json() const;
  std::string to_toml() const;
  /// CRC-64 (hex) of every setting that affects results: all sections
  /// except [paths] and the thread count.
  std::string hash() const;

  static RunConfig defaults();
  /// Unknown keys, wrong value types and invalid settings throw ConfigError.
  static RunConfig from_toml(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace kldiff
