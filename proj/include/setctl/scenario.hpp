#pragma once

// JSON scenario front end: validates a config, runs the selected pipeline
// and writes CSV files plus summary.json into the output directory.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace setctl::scenario {

using json = nlohmann::json;

// Schema problem; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& path, const std::string& msg) : std::invalid_argument(path + ": " + msg), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct Outcome {
  int exit_code = 0;  // 0 ok, 2 guaranteed infeasibility
  json summary;
  std::filesystem::path output_dir;
};

// Relative file names in the config (measurement CSVs) resolve against
// base_dir. out_override (if non-empty) replaces the config's output_dir.
Outcome run(const json& config, const std::filesystem::path& base_dir, const std::string& out_override = "");
Outcome run_file(const std::filesystem::path& config_path, const std::string& out_override = "");

// Built-in configs: wrapping-demo, bracketing, identify, smc, mpc, battery, ilo.
json demo_config(const std::string& name);

}  // namespace setctl::scenario
