#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sumlab/experiment_config.hpp"
#include "sumlab/io.hpp"

namespace sumlab {

using Json = nlohmann::ordered_json;

/// JSON-lines manifest. The `run_info` record carries the wall-clock
/// timestamp and is the only record skipped by manifests_equivalent.
class Manifest {
 public:
  explicit Manifest(const ExperimentConfig& cfg) {
    Json info{{"record", "run_info"}, {"timestamp", utc_now()}};
    lines_.push_back(std::move(info));
    Json settings = Json::object();
    for (const auto& [k, v] : cfg.to_settings()) settings[k] = v;
    lines_.push_back({{"record", "config"},
                      {"command", std::string(command_name(cfg.command))},
                      {"settings", std::move(settings)}});
    lines_.push_back({{"record", "seeds"},
                      {"master", cfg.seed},
                      {"derivation", "mix64(mix64(master ^ role) ^ replica), mix64 = splitmix64"},
                      {"rng", "mt19937_64"}});
  }

  void add(Json record) { lines_.push_back(std::move(record)); }

  std::string str() const {
    std::string out;
    for (const auto& l : lines_) out += l.dump() + "\n";
    return out;
  }

  static std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

 private:
  std::vector<Json> lines_;
};

inline std::vector<Json> parse_manifest(std::string_view text, std::string_view source) {
  std::vector<Json> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Same records in the same order, ignoring run_info.
inline bool manifests_equivalent(std::string_view a, std::string_view b) {
  auto strip = [](std::string_view text) {
    std::vector<Json> kept;
    for (auto& j : parse_manifest(text, "manifest")) {
      if (j.value("record", "") != "run_info") kept.push_back(std::move(j));
    }
    return kept;
  };
  return strip(a) == strip(b);
}

/// The settings of a manifest's config record, as a config layer, together
/// with the command it was recorded for.
inline std::pair<Command, Settings> manifest_settings(std::string_view text, std::string_view source) {
  for (const auto& j : parse_manifest(text, source)) {
    if (j.value("record", "") != "config") continue;
    const auto cmd = parse_command(j.value("command", ""));
    if (!cmd) throw ConfigError(std::string(source) + ": config record has an unknown command");
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : j.at("settings").items()) {
      if (!v.is_string()) throw ConfigError(std::string(source) + ": setting `" + k + "` is not a string");
      kv[k] = v.get<std::string>();
    }
    return {*cmd, to_layer(kv, source)};
  }
  throw ConfigError(std::string(source) + ": no config record");
}

}  // namespace sumlab
