#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vtagent/backend.hpp"
#include "vtagent/data_model.hpp"
#include "vtagent/grammar.hpp"

namespace vtagent {

enum class FallbackPolicy { UniformKeyframes, DirectAnswer };

std::string_view fallback_name(FallbackPolicy p);
FallbackPolicy fallback_from_name(std::string_view name);

struct EngineConfig {
  int keyframe_cap = 8;
  int max_attempts = 5;
  int parallelism = 4;
  std::string anchor_template_id = "default";
  std::string answer_template_id = "default";
  FallbackPolicy fallback_policy = FallbackPolicy::UniformKeyframes;
  double temperature = 0.0;
  int max_new_tokens = 512;
  std::int64_t seed = 0;
  // Backend retry backoff: base * 2^(k-1) before the k-th retry.
  int backoff_base_ms = 200;
};

// Throws ConfigError; called once before any sample is touched.
void validate_config(const EngineConfig& config);

struct Trajectory {
  std::string sample_id;
  // Absent only under the DirectAnswer fallback.
  std::optional<Turn> turn1;
  std::string turn1_raw;
  KeyframeSet keyframes;
  Turn turn2;
  bool used_fallback = false;
  int turn1_attempts = 0;
  int turn2_attempts = 0;
  std::vector<std::string> digests;

  const std::string& answer() const;
};

// What one TrajectoryLog line carries.
struct TrajectoryRecord {
  std::string sample_id;
  std::string turn1_raw;
  std::vector<int> keyframe_ids;
  std::vector<DroppedId> dropped;
  std::string turn2_raw;
  std::string answer;
  bool used_fallback = false;
  int turn1_attempts = 0;
  int turn2_attempts = 0;
  std::vector<std::string> digests;
  std::optional<std::string> error;  // set when the episode failed outright
};

TrajectoryRecord to_record(const Trajectory& t);
json record_to_json(const TrajectoryRecord& r);
TrajectoryRecord record_from_json(const json& j);
std::vector<TrajectoryRecord> load_trajectory_log(const std::filesystem::path& path);

// ---- prompts ---------------------------------------------------------------

std::vector<Message> build_anchor_prompt(const Sample& sample, const EngineConfig& config);
std::vector<Message> build_answer_prompt(const Sample& sample, const Turn& turn1,
                                         const KeyframeSet& keyframes,
                                         const EngineConfig& config);
// Single-turn answer prompt over the given frame positions (DirectAnswer
// fallback and frame-wise oracle runs).
std::vector<Message> build_direct_answer_prompt(const Sample& sample,
                                                const std::vector<int>& frame_positions,
                                                const EngineConfig& config);

// Deterministic per-call seed so retries and repeated attempts are distinct
// requests while staying reproducible.
std::int64_t derive_seed(std::int64_t base, std::string_view sample_id, std::string_view stage,
                         int attempt);

// backend.complete with up to config.max_attempts tries and exponential
// backoff; rethrows the last BackendError.
std::string complete_with_retry(Backend& backend, const GenerationRequest& request,
                                const EngineConfig& config);

// `salt` distinguishes repeated episodes of one sample (curation attempts).
Trajectory run_episode(const Sample& sample, Backend& backend, const EngineConfig& config,
                       int salt = 0);

struct BatchSummary {
  std::size_t total = 0;
  std::size_t executed = 0;
  std::size_t skipped = 0;  // already present in a resumed log
  std::size_t failed = 0;
};

// Runs every sample with at most config.parallelism in-flight episodes and
// writes the TrajectoryLog in manifest order.
BatchSummary run_batch(const std::vector<Sample>& samples, Backend& backend,
                       const EngineConfig& config, const std::filesystem::path& log_path,
                       bool resume);

}  // namespace vtagent
