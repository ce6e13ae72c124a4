#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vtagent/backend.hpp"
#include "vtagent/data_model.hpp"
#include "vtagent/engine.hpp"
#include "vtagent/metrics.hpp"

namespace vtagent {

struct FramewiseResult {
  std::string sample_id;
  std::vector<bool> per_frame_correct;
  bool any_correct = false;
  std::vector<int> failed_frames;  // backend failures, scored incorrect
};

struct Partition {
  std::vector<std::string> set_s;  // frame-solvable
  std::vector<std::string> set_u;  // frame-unsolvable
};

// One single-image answer prompt per frame, judged by exact match. Frames are
// queried concurrently when config.parallelism > 1; the vector is index-ordered.
FramewiseResult framewise_eval(const Sample& sample, Backend& backend, const EngineConfig& config);

std::vector<int> pseudo_keyframes(const FramewiseResult& result);  // throws NotFrameSolvable

Partition make_partition(const std::vector<FramewiseResult>& results);

struct OracleReport {
  MetricReport oracle;               // accuracy = share of frame-solvable samples
  std::optional<double> video_accuracy;  // x100, from a video-level run
  std::optional<double> gap;             // oracle - video, x100
  Partition partition;
};

OracleReport oracle_upper_bound(const std::vector<FramewiseResult>& results,
                                const std::vector<SampleScore>* video_scores = nullptr);

// Runs framewise_eval over all samples, writing `log_path` in manifest order.
std::vector<FramewiseResult> run_framewise(const std::vector<Sample>& samples, Backend& backend,
                                           const EngineConfig& config,
                                           const std::filesystem::path& log_path);

// Holistic baseline: one answer prompt over every frame of the sample.
SampleScore holistic_eval(const Sample& sample, Backend& backend, const EngineConfig& config,
                          double anls_threshold = 0.5);
// Runs holistic_eval over all samples and writes a score log at `log_path`.
std::vector<SampleScore> run_holistic(const std::vector<Sample>& samples, Backend& backend,
                                      const EngineConfig& config,
                                      const std::filesystem::path& log_path,
                                      double anls_threshold = 0.5);

json framewise_to_json(const FramewiseResult& r);
FramewiseResult framewise_from_json(const json& j);
std::vector<FramewiseResult> load_framewise_log(const std::filesystem::path& path);

// set_s.ids / set_u.ids, one sample id per line.
void write_partition(const Partition& p, const std::filesystem::path& dir);
Partition read_partition(const std::filesystem::path& dir);

struct StratifiedRow {
  std::string subset;  // "Set_s" or "Set_u"
  std::string system;
  std::size_t n = 0;
  std::optional<double> accuracy;  // x100; empty when n == 0
  std::optional<double> hit_rate;  // x100; Set_s only
  std::size_t hit_n = 0;
};

struct SystemScores {
  std::string name;
  std::vector<SampleScore> scores;
};

// Accuracy per subset per system; hit rate over Set_s against the pseudo
// keyframes derived from the frame-wise results.
std::vector<StratifiedRow> stratified_report(const std::vector<SystemScores>& systems,
                                             const Partition& partition,
                                             const std::map<std::string, std::vector<int>>& pseudo);

std::map<std::string, std::vector<int>> pseudo_keyframe_map(
    const std::vector<FramewiseResult>& results);

std::string format_stratified_table(const std::vector<StratifiedRow>& rows);
std::string format_stratified_csv(const std::vector<StratifiedRow>& rows);
std::string format_oracle_table(const OracleReport& report);

}  // namespace vtagent
