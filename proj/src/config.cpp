#include "kldiff/config.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "kldiff/io.hpp"

namespace kldiff {

using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool bare_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

// Cursor over one value; values never span lines.
struct ValueParser {
  const std::string& s;
  size_t i = 0;
  int line = 0;

  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }

  ojson parse_string() {
    std::string out;
    ++i;  // opening quote
    while (i < s.size() && s[i] != '"') {
      char c = s[i++];
      if (c == '\\') {
        if (i >= s.size()) fail(line, "unterminated escape");
        const char e = s[i++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(line, std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (i >= s.size()) fail(line, "unterminated string");
    ++i;
    return out;
  }

  ojson parse_scalar_token() {
    const size_t b = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' && s[i] != ' ' && s[i] != '\t') ++i;
    std::string tok = s.substr(b, i - b);
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok)
      if (c != '_') digits.push_back(c);
    if (digits.empty()) fail(line, "missing value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" ||
                          digits == "+inf" || digits == "-inf" || digits == "nan";
    try {
      size_t used = 0;
      if (is_float) {
        const double v = std::stod(digits, &used);
        if (used == digits.size()) return v;
      } else {
        const long long v = std::stoll(digits, &used, 10);
        if (used == digits.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail(line, "cannot parse value '" + tok + "'");
  }

  ojson parse_value(bool allow_array) {
    skip_ws();
    if (i >= s.size()) fail(line, "missing value");
    if (s[i] == '"') return parse_string();
    if (s[i] == '[') {
      if (!allow_array) fail(line, "nested arrays are not supported");
      ++i;
      ojson arr = ojson::array();
      skip_ws();
      if (i < s.size() && s[i] == ']') {
        ++i;
        return arr;
      }
      for (;;) {
        arr.push_back(parse_value(false));
        skip_ws();
        if (i < s.size() && s[i] == ',') {
          ++i;
          skip_ws();
          if (i < s.size() && s[i] == ']') {
            ++i;
            return arr;
          }
          continue;
        }
        if (i < s.size() && s[i] == ']') {
          ++i;
          return arr;
        }
        fail(line, "expected ',' or ']' in array");
      }
    }
    return parse_scalar_token();
  }

  void expect_end() {
    skip_ws();
    if (i < s.size() && s[i] != '#') fail(line, "unexpected trailing characters");
  }
};

bool same_kind(const ojson& schema, const ojson& v) {
  if (schema.is_null() || schema.is_number_float()) return v.is_number();
  if (schema.is_number_integer()) return v.is_number_integer();
  if (schema.is_boolean()) return v.is_boolean();
  if (schema.is_string()) return v.is_string();
  if (schema.is_array()) return v.is_array();
  return false;
}

std::string kind_name(const ojson& schema) {
  if (schema.is_null() || schema.is_number_float()) return "a number";
  if (schema.is_number_integer()) return "an integer";
  if (schema.is_boolean()) return "a boolean";
  if (schema.is_string()) return "a string";
  return "an array";
}

std::string toml_value(const ojson& v) {
  if (v.is_number_float()) {
    // dump() gives the shortest round-trip form; TOML floats need a '.' or exponent.
    std::string s = v.dump();
    if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
        s.find("nan") == std::string::npos)
      s += ".0";
    return s;
  }
  return v.dump();
}

template <class T>
std::optional<T> opt(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

}  // namespace

ojson parse_toml(const std::string& text) {
  ojson root = ojson::object();
  ojson* table = &root;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s[0] == '[') {
      const size_t close = s.find(']');
      if (s.rfind("[[", 0) == 0) fail(line, "arrays of tables are not supported");
      if (close == std::string::npos) fail(line, "unterminated table header");
      const std::string rest = trim(s.substr(close + 1));
      if (!rest.empty() && rest[0] != '#') fail(line, "unexpected text after table header");
      const std::string name = trim(s.substr(1, close - 1));
      if (!bare_key(name)) fail(line, "unsupported table name '" + name + "'");
      if (root.contains(name)) fail(line, "duplicate table [" + name + "]");
      root[name] = ojson::object();
      table = &root[name];
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!bare_key(key)) fail(line, "unsupported key '" + key + "'");
    if (table->contains(key)) fail(line, "duplicate key '" + key + "'");
    const std::string rhs = s.substr(eq + 1);
    ValueParser p{rhs, 0, line};
    (*table)[key] = p.parse_value(true);
    p.expect_end();
  }
  return root;
}

void RunConfig::finalize() {
  train.seed = seed;
  sampler.seed = seed;
  data.seed = seed;
  model.net.type_channels = type_channels(model.type_mode, model.num_species);
  model.validate();
  train.validate();
  sampler.validate();
  data.validate();
  if (sample_count < 0) throw ConfigError("sampler.count must be >= 0");
  if (model.sched.n_steps < 10) throw ConfigError("schedule.n_steps must be >= 10 for training");
}

ojson RunConfig::to_json() const {
  ojson j;
  j["seed"] = seed;
  const ojson m = model.to_json();
  j["schedule"] = m["schedule"];
  j["vp"] = m["vp"];
  ojson net = m["net"];
  net.erase("type_channels");
  j["net"] = net;
  j["model"] = {{"task", m["task"]},
                {"param", m["param"]},
                {"v0_variance", m["v0_variance"]},
                {"mean_free", m["mean_free"]},
                {"lattice_mode", m["lattice_mode"]},
                {"standardize", m["standardize"]},
                {"type_mode", m["type_mode"]},
                {"num_species", m["num_species"]}};
  ojson t;
  t["batch_size"] = train.batch_size;
  t["max_steps"] = train.max_steps;
  t["lr"] = train.optim.lr;
  t["beta1"] = train.optim.beta1;
  t["beta2"] = train.optim.beta2;
  t["eps"] = train.optim.eps;
  t["weight_decay"] = train.optim.weight_decay;
  t["lambda_v"] = train.lambda_v;
  t["lambda_l"] = train.lambda_l;
  t["lambda_a"] = train.lambda_a ? ojson(*train.lambda_a) : ojson(nullptr);
  t["lambda_mc"] = train.lambda_mc;
  t["shard"] = train.shard;
  t["log_every"] = train.log_every;
  t["eval_every"] = train.eval_every;
  t["eval_samples"] = train.eval_samples;
  t["eval_steps"] = train.eval_steps;
  t["site_tol"] = train.site_tol;
  t["patience"] = train.patience;
  t["target_metric"] = train.target_metric ? ojson(*train.target_metric) : ojson(nullptr);
  t["stop_at_target"] = train.stop_at_target;
  j["train"] = t;
  j["sampler"] = {{"scheme", to_string(sampler.scheme)},
                  {"n_steps", sampler.n_steps},
                  {"tau", sampler.tau},
                  {"n_corrector", sampler.n_corrector},
                  {"integrator", to_string(sampler.integrator)},
                  {"chunk", sampler.chunk},
                  {"count", sample_count},
                  {"coeff_check", coeff_check}};
  j["data"] = {{"family", to_string(data.family)},
               {"k", data.k},
               {"num_species", data.num_species},
               {"jitter", data.jitter},
               {"count", data.count}};
  j["paths"] = {{"train_data", paths.train_data},
                {"val_data", paths.val_data},
                {"test_data", paths.test_data},
                {"checkpoint", paths.checkpoint}};
  return j;
}

std::string RunConfig::to_toml() const {
  const ojson j = to_json();
  std::string out = "seed = " + j["seed"].dump() + "\n";
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) continue;
    out += "\n[" + section + "]\n";
    for (const auto& [key, v] : body.items()) {
      if (v.is_null()) continue;
      out += key + " = " + toml_value(v) + "\n";
    }
  }
  return out;
}

std::string RunConfig::hash() const {
  ojson j = to_json();
  j.erase("paths");
  return hex64(crc64(j.dump()));
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.finalize();
  return c;
}

RunConfig RunConfig::from_toml(const std::string& text) {
  const ojson parsed = parse_toml(text);
  ojson merged = defaults().to_json();
  for (const auto& [name, value] : parsed.items()) {
    if (!merged.contains(name)) throw ConfigError("unknown config key '" + name + "'");
    ojson& target = merged[name];
    if (target.is_object() != value.is_object())
      throw ConfigError("'" + name + "' must be " + (target.is_object() ? "a [table]" : "a top-level value"));
    if (!value.is_object()) {
      if (!same_kind(target, value)) throw ConfigError("'" + name + "' must be " + kind_name(target));
      target = value;
      continue;
    }
    for (const auto& [key, v] : value.items()) {
      if (!target.contains(key)) throw ConfigError("unknown config key '" + name + "." + key + "'");
      if (!same_kind(target[key], v))
        throw ConfigError("'" + name + "." + key + "' must be " + kind_name(target[key]));
      target[key] = v;
    }
  }

  RunConfig c;
  try {
    const auto& j = merged;
    if (j["seed"].get<long long>() < 0) throw ConfigError("seed must be non-negative");
    c.seed = j["seed"].get<std::uint64_t>();
    ojson mj;
    mj["schedule"] = j["schedule"];
    mj["vp"] = j["vp"];
    mj["net"] = j["net"];
    mj["net"]["type_channels"] = type_channels(parse_type_mode(j["model"]["type_mode"].get<std::string>()),
                                               j["model"]["num_species"].get<int>());
    for (const auto& [k, v] : j["model"].items()) mj[k] = v;
    mj["stdz_mean"] = std::vector<double>(6, 0.0);
    mj["stdz_scale"] = std::vector<double>(6, 1.0);
    c.model = ModelSpec::from_json(mj);

    const auto& t = j["train"];
    c.train.batch_size = t["batch_size"].get<int>();
    c.train.max_steps = t["max_steps"].get<int>();
    c.train.optim.lr = t["lr"].get<double>();
    c.train.optim.beta1 = t["beta1"].get<double>();
    c.train.optim.beta2 = t["beta2"].get<double>();
    c.train.optim.eps = t["eps"].get<double>();
    c.train.optim.weight_decay = t["weight_decay"].get<double>();
    c.train.lambda_v = t["lambda_v"].get<double>();
    c.train.lambda_l = t["lambda_l"].get<double>();
    c.train.lambda_a = opt<double>(t["lambda_a"]);
    c.train.lambda_mc = t["lambda_mc"].get<int>();
    c.train.shard = t["shard"].get<int>();
    c.train.log_every = t["log_every"].get<int>();
    c.train.eval_every = t["eval_every"].get<int>();
    c.train.eval_samples = t["eval_samples"].get<int>();
    c.train.eval_steps = t["eval_steps"].get<int>();
    c.train.site_tol = t["site_tol"].get<double>();
    c.train.patience = t["patience"].get<int>();
    c.train.target_metric = opt<double>(t["target_metric"]);
    c.train.stop_at_target = t["stop_at_target"].get<bool>();

    const auto& s = j["sampler"];
    c.sampler.scheme = parse_scheme(s["scheme"].get<std::string>());
    c.sampler.n_steps = s["n_steps"].get<int>();
    c.sampler.tau = s["tau"].get<double>();
    c.sampler.n_corrector = s["n_corrector"].get<int>();
    c.sampler.integrator = parse_integrator(s["integrator"].get<std::string>());
    c.sampler.chunk = s["chunk"].get<int>();
    c.sample_count = s["count"].get<int>();
    c.coeff_check = s["coeff_check"].get<bool>();

    const auto& d = j["data"];
    c.data.family = parse_toy_family(d["family"].get<std::string>());
    c.data.k = d["k"].get<int>();
    c.data.num_species = d["num_species"].get<int>();
    c.data.jitter = d["jitter"].get<double>();
    c.data.count = d["count"].get<int>();

    const auto& p = j["paths"];
    c.paths.train_data = p["train_data"].get<std::string>();
    c.paths.val_data = p["val_data"].get<std::string>();
    c.paths.test_data = p["test_data"].get<std::string>();
    c.paths.checkpoint = p["checkpoint"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.finalize();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return from_toml(text);
}

}  // namespace kldiff
