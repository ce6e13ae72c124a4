#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vtagent/data_model.hpp"
#include "vtagent/engine.hpp"
#include "vtagent/jsonl.hpp"

namespace vtagent {

// Unicode scalar values of a UTF-8 string; invalid bytes become U+FFFD.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);

// Lowercase, trim, collapse whitespace runs, strip one terminal period.
std::string normalize_answer(std::string_view text);

int exact_accuracy(std::string_view pred, const std::vector<std::string>& golds);

// Unit-cost edit distance over Unicode scalar values.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

// Normalized similarity of already-normalized strings; 1 when both empty.
double normalized_similarity(std::string_view a, std::string_view b);

// Max-over-golds similarity, zeroed below `threshold`.
double anls(std::string_view pred, const std::vector<std::string>& golds, double threshold = 0.5);

// Curation judge: exact match, or ANLS at or above the default threshold.
bool judge_answer(std::string_view pred, const std::vector<std::string>& golds);

bool hit(const std::vector<int>& selected, const std::vector<int>& annotated);
inline bool hit(const KeyframeSet& selected, const std::vector<int>& annotated) {
  return hit(selected.ids, annotated);
}

struct SampleScore {
  std::string sample_id;
  std::string split_tag;
  int accuracy = 0;
  double anls = 0.0;
  std::optional<bool> hit;
  std::vector<int> keyframe_ids;
  bool used_fallback = false;
  bool failed = false;

  bool operator==(const SampleScore&) const = default;
};

struct MetricReport {
  std::string split_tag;
  std::size_t n = 0;
  double mean_accuracy = 0.0;  // x100
  double mean_anls = 0.0;      // x100
  std::optional<double> hit_rate;  // x100, over samples with hit defined
  std::size_t hit_n = 0;
  std::size_t failed = 0;
};

MetricReport aggregate(const std::vector<SampleScore>& scores, std::string split_tag = "all");
// One report per split (sorted by tag) followed by the overall "all" row.
std::vector<MetricReport> aggregate_by_split(const std::vector<SampleScore>& scores);

SampleScore score_record(const TrajectoryRecord& record, const Sample& sample,
                         double anls_threshold = 0.5);

using SampleIndex = std::unordered_map<std::string, const Sample*>;
SampleIndex index_samples(const std::vector<Sample>& samples);

// Scores a trajectory log against its samples. The OpenMP kernel and the
// serial reference return identical vectors in record order.
std::vector<SampleScore> score_records(const std::vector<TrajectoryRecord>& records,
                                       const SampleIndex& samples, double anls_threshold = 0.5);
std::vector<SampleScore> score_records_serial(const std::vector<TrajectoryRecord>& records,
                                              const SampleIndex& samples,
                                              double anls_threshold = 0.5);

struct AnlsPair {
  std::string pred;
  std::vector<std::string> golds;
};
std::vector<double> anls_batch(const std::vector<AnlsPair>& pairs, double threshold = 0.5);
std::vector<double> anls_batch_serial(const std::vector<AnlsPair>& pairs, double threshold = 0.5);

json score_to_json(const SampleScore& s);
SampleScore score_from_json(const json& j);
json report_to_json(const MetricReport& r);
MetricReport report_from_json(const json& j);

// Machine output: one line per SampleScore, then one {"summary": ...} line per report.
void write_score_log(const std::filesystem::path& path, const std::vector<SampleScore>& scores,
                     const std::vector<MetricReport>& reports);
std::vector<SampleScore> load_score_log(const std::filesystem::path& path);

// Aligned text table: Split | N | ACC. | ANLS | Hit, values x100 to 2 decimals.
std::string format_report_table(const std::vector<MetricReport>& reports);
std::string format_report_csv(const std::vector<MetricReport>& reports);

}  // namespace vtagent
