#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vtagent {

struct FrameRef {
  int index = 0;
  std::string source_path;
  std::optional<double> timestamp_s;

  bool operator==(const FrameRef&) const = default;
};

struct Sample {
  std::string sample_id;
  std::string video_id;
  std::vector<FrameRef> frames;
  std::string question;
  std::vector<std::string> gold_answers;
  // Sorted, duplicate-free positions into `frames`.
  std::optional<std::vector<int>> pseudo_keyframes;
  std::string split_tag;
  // original_indices[i] is the index frame i carried before any sampling.
  // Empty means the identity mapping.
  std::vector<int> original_indices;

  int frame_count() const { return static_cast<int>(frames.size()); }
  bool operator==(const Sample&) const = default;
};

struct DatasetManifest {
  std::vector<Sample> samples;
  std::string source_uri;
  int schema_version = 1;

  bool operator==(const DatasetManifest&) const = default;
};

struct SamplingPolicy {
  enum class Kind { All, Uniform };
  Kind kind = Kind::Uniform;
  int n = 32;

  static SamplingPolicy all() { return {Kind::All, 0}; }
  static SamplingPolicy uniform(int n) { return {Kind::Uniform, n}; }
};

struct LoadOptions {
  // Relative frame paths are resolved against this directory; defaults to the
  // manifest's own directory.
  std::optional<std::filesystem::path> frames_root;
  bool verify_files = true;
};

DatasetManifest load_manifest(const std::filesystem::path& path,
                              const LoadOptions& opts = {});
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Throws MalformedRecord(0, reason) when a Sample breaks an invariant.
void check_sample(const Sample& sample);

// Floor-spaced positions {floor(k*(count-1)/(n-1))}, endpoints included.
std::vector<int> uniform_positions(int count, int n);

Sample sample_frames(const Sample& sample, const SamplingPolicy& policy);
std::vector<Sample> dedupe_samples(const std::vector<Sample>& samples);

// Case-folded, whitespace-collapsed question text used for deduplication.
std::string dedupe_question_key(const std::string& question);

}  // namespace vtagent
