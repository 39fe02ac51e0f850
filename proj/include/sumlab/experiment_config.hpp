#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sumlab/io.hpp"
#include "sumlab/problems.hpp"
#include "sumlab/sum_core.hpp"

namespace sumlab {

enum class Command { equiv_check, converge, stability, generalize, bounds };

inline std::string_view command_name(Command c) {
  switch (c) {
    case Command::equiv_check: return "equiv-check";
    case Command::converge: return "converge";
    case Command::stability: return "stability";
    case Command::generalize: return "generalize";
    case Command::bounds: return "bounds";
  }
  return "?";
}

inline std::optional<Command> parse_command(std::string_view s) {
  for (Command c : {Command::equiv_check, Command::converge, Command::stability,
                    Command::generalize, Command::bounds}) {
    if (s == command_name(c)) return c;
  }
  return std::nullopt;
}

/// A raw setting and where it came from ("run.cfg:4", "--alpha", "default").
struct Setting {
  std::string value;
  std::string origin;
};

using Settings = std::map<std::string, Setting>;

/// Every key a config file, flag or manifest may set.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "problem", "n",     "n_test", "dim",     "hidden", "classes",      "method",
      "s",       "beta",  "alpha",  "schedule", "L",     "C",            "G",
      "sigma2",  "f0",    "betas",  "steps",   "replicas", "seed",       "record_every",
      "out",     "all_methods",     "identical_neighbor"};
  return keys;
}

inline bool is_config_key(std::string_view k) {
  for (const auto& key : config_keys()) {
    if (key == k) return true;
  }
  return false;
}

/// Flat `key = value` text. Blank lines and `#` comments are ignored.
inline Settings parse_settings(std::string_view text, std::string_view source) {
  Settings out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    for (char& ch : key) {
      if (ch == '-') ch = '_';
    }
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (!is_config_key(key)) throw ConfigError(where + ": unknown key `" + key + "`");
    if (value.empty()) throw ConfigError(where + ": empty value for `" + key + "`");
    if (out.count(key)) throw ConfigError(where + ": duplicate key `" + key + "`");
    out[key] = {value, where};
  }
  return out;
}

/// Fully resolved parameters of one CLI invocation.
struct ExperimentConfig {
  Command command = Command::converge;
  ProblemKind problem = ProblemKind::sigreg;
  std::size_t n = 1000;
  std::size_t n_test = 1000;
  std::size_t dim = 20;
  std::size_t hidden = 32;
  std::size_t classes = 3;
  std::optional<Method> method;  // exactly one of method / s_value is set
  std::optional<double> s_value;
  double beta = 0.9;
  ScheduleMode schedule = ScheduleMode::fixed;
  double alpha = 0.0;  // fixed mode only
  double L = 0.0;      // scheduled modes and bounds
  double C = 1.0;
  double G = 1.0;       // bounds only
  double sigma2 = 1.0;  // bounds only
  double f0 = 1.0;      // bounds only
  std::vector<double> betas{0.0, 0.5, 0.9};
  std::size_t steps = 1000;
  std::size_t replicas = 20;
  std::uint64_t seed = 1;
  std::size_t record_every = 0;  // 0: default cadence
  std::string out = "sumlab_out";
  bool all_methods = false;
  bool identical_neighbor = false;

  double s() const { return method ? unification_scalar(*method, beta) : *s_value; }

  /// SUM config for method m (or the configured s when m is empty).
  SUMConfig sum_config(std::optional<Method> m = std::nullopt) const {
    const double sv = m ? unification_scalar(*m, beta) : s();
    if (schedule == ScheduleMode::fixed) return SUMConfig::fixed(alpha, beta, sv);
    return SUMConfig::scheduled(schedule, beta, sv, L, C, steps);
  }

  std::size_t effective_record_every() const {
    return record_every ? record_every : std::max<std::size_t>(1, steps / 500);
  }

  /// Canonical key=value form. Resolving it again yields the same config.
  std::map<std::string, std::string> to_settings() const {
    std::map<std::string, std::string> kv;
    kv["problem"] = std::string(kind_name(problem));
    kv["n"] = std::to_string(n);
    kv["n_test"] = std::to_string(n_test);
    kv["dim"] = std::to_string(dim);
    kv["hidden"] = std::to_string(hidden);
    kv["classes"] = std::to_string(classes);
    if (method) kv["method"] = std::string(method_name(*method));
    else kv["s"] = format_double(*s_value);
    kv["beta"] = format_double(beta);
    if (schedule == ScheduleMode::fixed) {
      kv["alpha"] = format_double(alpha);
    } else {
      kv["schedule"] = std::string(schedule_name(schedule));
      kv["L"] = format_double(L);
      kv["C"] = format_double(C);
    }
    if (command == Command::bounds || command == Command::equiv_check) {
      std::string b;
      for (std::size_t i = 0; i < betas.size(); ++i) b += (i ? "," : "") + format_double(betas[i]);
      kv["betas"] = b;
    }
    if (command == Command::bounds) {
      kv["L"] = format_double(L);
      kv["C"] = format_double(C);
      kv["G"] = format_double(G);
      kv["sigma2"] = format_double(sigma2);
      kv["f0"] = format_double(f0);
    }
    kv["steps"] = std::to_string(steps);
    kv["replicas"] = std::to_string(replicas);
    kv["seed"] = std::to_string(seed);
    kv["record_every"] = std::to_string(record_every);
    kv["out"] = out;
    kv["all_methods"] = all_methods ? "true" : "false";
    kv["identical_neighbor"] = identical_neighbor ? "true" : "false";
    return kv;
  }

  std::string to_text() const {
    std::string s;
    for (const auto& [k, v] : to_settings()) s += k + " = " + v + "\n";
    return s;
  }
};

/// Defaults per subcommand; they reproduce the documented example runs.
inline Settings command_defaults(Command c) {
  std::map<std::string, std::string> d{{"problem", "sigreg"}, {"n", "1000"},   {"n_test", "1000"},
                                       {"dim", "20"},         {"hidden", "32"}, {"classes", "3"},
                                       {"beta", "0.9"},       {"steps", "1000"}, {"replicas", "20"},
                                       {"seed", "1"},         {"record_every", "0"},
                                       {"out", "sumlab_out"}, {"alpha", "0.01"}, {"C", "1"}};
  switch (c) {
    case Command::equiv_check:
      d["problem"] = "quadratic";
      d["alpha"] = "0.02";
      d["betas"] = "0,0.5,0.9";
      break;
    case Command::converge: break;
    case Command::stability:
      d["n"] = "100";
      d["dim"] = "10";
      d["alpha"] = "0.05";
      d["steps"] = "2000";
      d["replicas"] = "100";
      break;
    case Command::generalize:
      d["problem"] = "mlp";
      d["n"] = "200";
      d["dim"] = "10";
      d["steps"] = "2000";
      d["all_methods"] = "true";
      break;
    case Command::bounds:
      d["steps"] = "99";
      d["L"] = "1";
      d["G"] = "1";
      d["sigma2"] = "1";
      d["f0"] = "1";
      d["betas"] = "0,0.5,0.9";
      break;
  }
  Settings out;
  for (auto& [k, v] : d) out[k] = {v, "default"};
  return out;
}

namespace detail {

inline double setting_double(const Setting& s, std::string_view key) {
  const auto v = parse_double(s.value);
  if (!v || !std::isfinite(*v)) {
    throw ConfigError(s.origin + ": `" + std::string(key) + "` expects a real number, got `" + s.value + "`");
  }
  return *v;
}

inline std::uint64_t setting_uint(const Setting& s, std::string_view key) {
  std::uint64_t v = 0;
  const char* b = s.value.data();
  const char* e = b + s.value.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) {
    throw ConfigError(s.origin + ": `" + std::string(key) + "` expects a non-negative integer, got `" +
                      s.value + "`");
  }
  return v;
}

inline bool setting_bool(const Setting& s, std::string_view key) {
  if (s.value == "true" || s.value == "1") return true;
  if (s.value == "false" || s.value == "0") return false;
  throw ConfigError(s.origin + ": `" + std::string(key) + "` expects true or false, got `" + s.value + "`");
}

// Keys that exclude each other. A higher layer setting one member drops the
// others from lower layers; two members in one layer is an error.
inline const std::vector<std::vector<std::string>>& exclusive_groups() {
  static const std::vector<std::vector<std::string>> groups{{"method", "s"}, {"alpha", "schedule"}};
  return groups;
}

inline void check_exclusive(const Settings& layer) {
  for (const auto& group : exclusive_groups()) {
    const Setting* first = nullptr;
    std::string first_key;
    for (const auto& k : group) {
      auto it = layer.find(k);
      if (it == layer.end()) continue;
      if (first) {
        throw ConfigError(it->second.origin + ": `" + k + "` cannot be combined with `" + first_key +
                          "` (" + first->origin + ")");
      }
      first = &it->second;
      first_key = k;
    }
  }
}

}  // namespace detail

/// Stack layers lowest first; later layers win key by key and displace
/// excluded partners set below them.
inline Settings merge_layers(const std::vector<Settings>& layers) {
  Settings merged;
  for (const auto& layer : layers) {
    detail::check_exclusive(layer);
    for (const auto& group : detail::exclusive_groups()) {
      bool touches = false;
      for (const auto& k : group) touches = touches || layer.count(k);
      if (touches) {
        for (const auto& k : group) merged.erase(k);
      }
    }
    for (const auto& [k, v] : layer) merged[k] = v;
  }
  return merged;
}

/// Build a config from defaults plus user layers (file or manifest, then flags).
inline ExperimentConfig resolve_config(Command cmd, const std::vector<Settings>& user_layers) {
  Settings user = merge_layers(user_layers);
  Settings defaults = command_defaults(cmd);
  // Defaults only fill a group nobody set.
  for (const auto& group : detail::exclusive_groups()) {
    bool user_set = false;
    for (const auto& k : group) user_set = user_set || user.count(k);
    if (user_set) {
      for (const auto& k : group) defaults.erase(k);
    }
  }
  if (cmd == Command::equiv_check && user.count("beta") && !user.count("betas")) {
    defaults["betas"] = {user.at("beta").value, user.at("beta").origin};
  }
  if (cmd == Command::generalize && (user.count("method") || user.count("s")) &&
      !user.count("all_methods")) {
    defaults.erase("all_methods");
  }
  const Settings all = merge_layers({defaults, user});

  ExperimentConfig c;
  c.command = cmd;
  auto get = [&](const std::string& k) -> const Setting* {
    auto it = all.find(k);
    return it == all.end() ? nullptr : &it->second;
  };
  using detail::setting_bool;
  using detail::setting_double;
  using detail::setting_uint;

  if (auto* s = get("problem")) {
    const auto k = parse_kind(s->value);
    if (!k) throw ConfigError(s->origin + ": unknown problem `" + s->value + "` (quadratic, sigreg, mlp)");
    c.problem = *k;
  }
  if (auto* s = get("n")) c.n = setting_uint(*s, "n");
  if (auto* s = get("n_test")) c.n_test = setting_uint(*s, "n_test");
  if (auto* s = get("dim")) c.dim = setting_uint(*s, "dim");
  if (auto* s = get("hidden")) c.hidden = setting_uint(*s, "hidden");
  if (auto* s = get("classes")) c.classes = setting_uint(*s, "classes");
  if (auto* s = get("beta")) c.beta = setting_double(*s, "beta");
  if (!(c.beta >= 0.0 && c.beta < 1.0)) throw ConfigError(get("beta")->origin + ": beta must lie in [0, 1)");

  if (auto* s = get("method")) {
    c.method = parse_method(s->value);
    if (!c.method) throw ConfigError(s->origin + ": unknown method `" + s->value + "` (shb, snag, sg)");
  } else if (auto* s2 = get("s")) {
    c.s_value = setting_double(*s2, "s");
    if (*c.s_value < 0.0) throw ConfigError(s2->origin + ": s must be >= 0");
  } else {
    c.method = Method::shb;
  }

  if (auto* s = get("C")) c.C = setting_double(*s, "C");
  if (auto* s = get("schedule")) {
    const auto m = parse_schedule(s->value);
    if (!m || *m == ScheduleMode::fixed) {
      throw ConfigError(s->origin + ": unknown schedule `" + s->value + "` (thm1, thm2)");
    }
    c.schedule = *m;
    if (!(c.C > 0.0)) throw ConfigError(get("C")->origin + ": C must be > 0");
    if (auto* l = get("L")) {
      c.L = setting_double(*l, "L");
    } else if (c.problem == ProblemKind::quadratic) {
      c.L = 1.0;
    } else if (c.problem == ProblemKind::sigreg) {
      c.L = sigreg_constants(kDefaultRadius).L_analytic.value();
    } else {
      throw ConfigError(s->origin + ": schedule on the mlp problem needs an explicit L");
    }
    if (!(c.L > 0.0)) throw ConfigError((get("L") ? get("L")->origin : s->origin) + ": L must be > 0");
  } else if (auto* a = get("alpha")) {
    c.alpha = setting_double(*a, "alpha");
    if (!(c.alpha > 0.0)) throw ConfigError(a->origin + ": alpha must be > 0");
    if (auto* l = get("L")) c.L = setting_double(*l, "L");
  }

  if (auto* s = get("G")) c.G = setting_double(*s, "G");
  if (auto* s = get("sigma2")) c.sigma2 = setting_double(*s, "sigma2");
  if (auto* s = get("f0")) c.f0 = setting_double(*s, "f0");
  if (auto* s = get("betas")) {
    c.betas.clear();
    std::string_view rest = s->value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string tok(rest.substr(0, comma));
      const double b = setting_double({tok, s->origin}, "betas");
      if (!(b >= 0.0 && b < 1.0)) throw ConfigError(s->origin + ": betas must lie in [0, 1)");
      c.betas.push_back(b);
      rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
    }
    if (c.betas.empty()) throw ConfigError(s->origin + ": betas is empty");
  }

  if (auto* s = get("steps")) c.steps = setting_uint(*s, "steps");
  if (auto* s = get("replicas")) c.replicas = setting_uint(*s, "replicas");
  if (auto* s = get("seed")) c.seed = setting_uint(*s, "seed");
  if (auto* s = get("record_every")) c.record_every = setting_uint(*s, "record_every");
  if (auto* s = get("out")) c.out = s->value;
  if (auto* s = get("all_methods")) c.all_methods = setting_bool(*s, "all_methods");
  if (auto* s = get("identical_neighbor")) c.identical_neighbor = setting_bool(*s, "identical_neighbor");

  auto origin = [&](const char* k) { return get(k) ? get(k)->origin : std::string("default"); };
  if (c.command != Command::bounds && c.steps < 1) throw ConfigError(origin("steps") + ": steps must be >= 1");
  if (c.replicas < 1) throw ConfigError(origin("replicas") + ": replicas must be >= 1");
  if (c.n < 2) throw ConfigError(origin("n") + ": n must be >= 2");
  if (c.dim < 1) throw ConfigError(origin("dim") + ": dim must be >= 1");
  if (c.command == Command::equiv_check && c.schedule != ScheduleMode::fixed) {
    throw ConfigError(origin("schedule") + ": equiv-check uses a fixed alpha");
  }
  if (c.command == Command::generalize) {
    if (c.s_value) throw ConfigError(origin("s") + ": generalize takes --method, not --s");
    if (c.problem != ProblemKind::mlp) throw ConfigError(origin("problem") + ": generalize needs --problem mlp");
    if (c.schedule != ScheduleMode::fixed) {
      throw ConfigError(origin("schedule") + ": generalize uses a fixed alpha shared by all methods");
    }
  }
  if (c.problem == ProblemKind::mlp) {
    if (c.hidden < 1 || c.hidden > 64) throw ConfigError(origin("hidden") + ": hidden must lie in [1, 64]");
    if (c.classes < 2 || c.classes > 10) throw ConfigError(origin("classes") + ": classes must lie in [2, 10]");
    if (c.n > 10000) throw ConfigError(origin("n") + ": n must be <= 10000 for mlp");
  }
  if (c.command == Command::bounds) {
    if (c.schedule != ScheduleMode::fixed) {
      throw ConfigError(origin("schedule") + ": bounds tabulates both schedules; drop --schedule");
    }
    if (!(c.L > 0.0) || !(c.G > 0.0) || !(c.C > 0.0) || c.sigma2 < 0.0 || c.f0 < 0.0) {
      throw ConfigError("bounds: need L, G, C > 0 and sigma2, f0 >= 0");
    }
  } else {
    c.sum_config();  // surfaces any remaining inconsistency
  }
  return c;
}

inline Settings to_layer(const std::map<std::string, std::string>& kv, std::string_view origin) {
  Settings out;
  for (const auto& [k, v] : kv) {
    if (!is_config_key(k)) throw ConfigError(std::string(origin) + ": unknown key `" + k + "`");
    out[k] = {v, std::string(origin) + ":" + k};
  }
  return out;
}

}  // namespace sumlab
