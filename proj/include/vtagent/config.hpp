#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vtagent/data_model.hpp"
#include "vtagent/engine.hpp"
#include "vtagent/grpo.hpp"

namespace vtagent {

// Everything a command needs, resolved before any work starts.
// Precedence: flag > environment > config file > default.
struct RunConfig {
  // backend
  std::string backend = "http";  // http | scripted | replay
  std::string api_base = "http://localhost:8000/v1";
  std::string api_key;
  std::string model;
  std::string image_mode = "data";  // data | file
  double timeout_s = 120.0;
  std::string script;  // scripted backend rules/queue (JSONL)
  std::string store;   // transcript store: read by replay, written otherwise

  // data
  std::string manifest;
  std::string frames_root;
  int frames = 32;  // uniform sample size; 0 keeps every frame
  bool dedupe = false;
  std::string out_dir = "out";
  bool resume = false;

  // engine
  EngineConfig engine{.parallelism = 4, .seed = 7};
  double anls_threshold = 0.5;

  // curation
  int curation_attempts = 5;
  double curation_temperature = 1.0;

  // toy GRPO
  grpo::TrainConfig grpo;

  bool svg = false;
};

// Assigns one key; throws ConfigError on unknown keys or unparsable values.
// Dashes and underscores in keys are interchangeable.
void set_config_key(RunConfig& config, std::string key, const std::string& value);

// (key, value) pairs in a stable order; the API key is masked.
std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& config);
std::string format_config(const RunConfig& config);

// Flat "key = value" lines; '#' starts a comment.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

using EnvLookup = std::function<const char*(const char*)>;
// VTAGENT_API_BASE, VTAGENT_API_KEY, VTAGENT_MODEL.
void apply_env(RunConfig& config, const EnvLookup& lookup);

RunConfig resolve_config(const std::filesystem::path* file,
                         const std::vector<std::pair<std::string, std::string>>& flags,
                         const EnvLookup& lookup);

SamplingPolicy sampling_policy(const RunConfig& config);

}  // namespace vtagent
