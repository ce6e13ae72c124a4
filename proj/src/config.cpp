#include "vtagent/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vtagent/error.hpp"
#include "vtagent/grammar.hpp"

namespace vtagent {

namespace {

std::string norm_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

std::string fmt_double(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    out = static_cast<T>(std::strtod(first, &end));
    if (value.empty() || end != last || !std::isfinite(out))
      throw ConfigError(key + ": not a number: '" + value + "'");
  } else {
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || p != last) throw ConfigError(key + ": not an integer: '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": not a boolean: '" + value + "'");
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field num(const char* key, T RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

Field str(const char* key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

Field flag(const char* key, bool RunConfig::*member) {
  return {key,
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_bool(k, v);
          },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

// Nested fields reach through an accessor.
template <typename T, typename Access>
Field nested(const char* key, Access access) {
  return {key,
          [access](RunConfig& c, const std::string& k, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) access(c) = parse_bool(k, v);
            else if constexpr (std::is_same_v<T, std::string>) access(c) = v;
            else access(c) = parse_number<T>(k, v);
          },
          [access](const RunConfig& c) {
            auto& m = access(const_cast<RunConfig&>(c));
            if constexpr (std::is_same_v<T, bool>) return std::string(m ? "true" : "false");
            else if constexpr (std::is_same_v<T, std::string>) return std::string(m);
            else if constexpr (std::is_floating_point_v<T>) return fmt_double(m);
            else return std::to_string(m);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      str("backend", &RunConfig::backend),
      str("api_base", &RunConfig::api_base),
      str("api_key", &RunConfig::api_key),
      str("model", &RunConfig::model),
      str("image_mode", &RunConfig::image_mode),
      num("timeout_s", &RunConfig::timeout_s),
      str("script", &RunConfig::script),
      str("store", &RunConfig::store),
      str("manifest", &RunConfig::manifest),
      str("frames_root", &RunConfig::frames_root),
      num("frames", &RunConfig::frames),
      flag("dedupe", &RunConfig::dedupe),
      str("out_dir", &RunConfig::out_dir),
      flag("resume", &RunConfig::resume),
      nested<int>("cap", [](RunConfig& c) -> int& { return c.engine.keyframe_cap; }),
      nested<int>("max_attempts", [](RunConfig& c) -> int& { return c.engine.max_attempts; }),
      nested<int>("parallelism", [](RunConfig& c) -> int& { return c.engine.parallelism; }),
      nested<std::string>("anchor_template",
                          [](RunConfig& c) -> std::string& { return c.engine.anchor_template_id; }),
      nested<std::string>("answer_template",
                          [](RunConfig& c) -> std::string& { return c.engine.answer_template_id; }),
      {"fallback",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.engine.fallback_policy = fallback_from_name(v);
       },
       [](const RunConfig& c) { return std::string(fallback_name(c.engine.fallback_policy)); }},
      nested<double>("temperature", [](RunConfig& c) -> double& { return c.engine.temperature; }),
      nested<int>("max_new_tokens", [](RunConfig& c) -> int& { return c.engine.max_new_tokens; }),
      {"seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto s = parse_number<std::int64_t>(k, v);
         if (s < 0) throw ConfigError("seed must be non-negative");
         c.engine.seed = s;
         c.grpo.seed = static_cast<std::uint64_t>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.engine.seed); }},
      nested<int>("backoff_ms", [](RunConfig& c) -> int& { return c.engine.backoff_base_ms; }),
      num("anls_threshold", &RunConfig::anls_threshold),
      num("curation_attempts", &RunConfig::curation_attempts),
      num("curation_temperature", &RunConfig::curation_temperature),
      nested<int>("steps", [](RunConfig& c) -> int& { return c.grpo.steps; }),
      nested<int>("group", [](RunConfig& c) -> int& { return c.grpo.step.group_size; }),
      nested<double>("eps", [](RunConfig& c) -> double& { return c.grpo.step.eps; }),
      nested<double>("lr", [](RunConfig& c) -> double& { return c.grpo.step.lr; }),
      nested<double>("delta", [](RunConfig& c) -> double& { return c.grpo.step.delta; }),
      nested<int>("inner_steps", [](RunConfig& c) -> int& { return c.grpo.step.inner_steps; }),
      nested<bool>("tool_reward", [](RunConfig& c) -> bool& { return c.grpo.step.tool_reward; }),
      nested<int>("toy_frames", [](RunConfig& c) -> int& { return c.grpo.n_frames; }),
      nested<int>("toy_vocab", [](RunConfig& c) -> int& { return c.grpo.vocab; }),
      nested<int>("toy_suite", [](RunConfig& c) -> int& { return c.grpo.suite_size; }),
      nested<int>("envs_per_step", [](RunConfig& c) -> int& { return c.grpo.envs_per_step; }),
      nested<double>("feature_scale", [](RunConfig& c) -> double& { return c.grpo.feature_scale; }),
      flag("svg", &RunConfig::svg),
  };
  return table;
}

std::string trim_copy(const std::string& s) { return std::string(trim(s)); }

}  // namespace

void set_config_key(RunConfig& config, std::string key, const std::string& value) {
  key = norm_key(std::move(key));
  for (const auto& f : fields())
    if (key == f.key) {
      try {
        f.set(config, key, value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(key + ": " + e.what());
      }
      return;
    }
  throw ConfigError("unknown config key: " + key);
}

std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) {
    std::string v = f.get(config);
    if (std::string_view(f.key) == "api_key" && !v.empty()) v = "***";
    out.emplace_back(f.key, std::move(v));
  }
  return out;
}

std::string format_config(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& [k, v] : config_items(config)) os << k << " = " << v << '\n';
  return os.str();
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      set_config_key(config, trim_copy(line.substr(0, eq)), trim_copy(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_env(RunConfig& config, const EnvLookup& lookup) {
  if (!lookup) return;
  if (const char* v = lookup("VTAGENT_API_BASE"); v && *v) config.api_base = v;
  if (const char* v = lookup("VTAGENT_API_KEY"); v && *v) config.api_key = v;
  if (const char* v = lookup("VTAGENT_MODEL"); v && *v) config.model = v;
}

RunConfig resolve_config(const std::filesystem::path* file,
                         const std::vector<std::pair<std::string, std::string>>& flags,
                         const EnvLookup& lookup) {
  RunConfig config;
  if (file) apply_config_file(config, *file);
  apply_env(config, lookup);
  for (const auto& [k, v] : flags) set_config_key(config, k, v);
  return config;
}

SamplingPolicy sampling_policy(const RunConfig& config) {
  if (config.frames < 0) throw ConfigError("frames must be >= 0");
  return config.frames == 0 ? SamplingPolicy::all() : SamplingPolicy::uniform(config.frames);
}

}  // namespace vtagent
