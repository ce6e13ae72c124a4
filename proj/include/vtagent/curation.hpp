#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vtagent/backend.hpp"
#include "vtagent/data_model.hpp"
#include "vtagent/engine.hpp"

namespace vtagent {

using Judge = std::function<bool(std::string_view pred, const std::vector<std::string>& golds)>;

struct SftRecord {
  std::string sample_id;
  std::string prompt;  // text of the anchoring instruction and question
  std::string target;  // render_turn(turn1) + "\n" + render_turn(turn2)
  std::string teacher_id;
  int attempts = 0;
};

struct RlRecord {
  std::string sample_id;
  int correct_count = 0;
  std::vector<std::string> attempt_answers;
  std::vector<int> outcomes;  // 1 correct, 0 incorrect or malformed
};

// Retention predicate for difficulty filtering: outcomes are mixed.
inline bool retain_for_rl(int correct_count, int attempts) {
  return correct_count > 0 && correct_count < attempts;
}

struct CurationOptions {
  int max_attempts = 5;
  bool resume = false;
  Judge judge = nullptr;  // null: exact match or ANLS >= 0.5
};

struct CurationSummary {
  std::size_t inputs = 0;
  std::size_t processed = 0;  // newly processed in this run
  std::size_t skipped = 0;    // already in the progress log
  std::size_t kept = 0;       // cumulative over the output file
  std::size_t dropped = 0;    // cumulative
  std::map<int, std::size_t> correct_histogram;  // RL only, cumulative
};

// Throws SchemaMismatch unless both turns parse and the answer passes `judge`.
void check_sft_target(const std::string& target, const std::vector<std::string>& golds,
                      const Judge& judge);

json sft_to_json(const SftRecord& r, const Sample& sample);
json rl_to_json(const RlRecord& r);

// Writes `out_dir`/sft_corpus.jsonl and sft_progress.jsonl. The engine config
// should use stochastic decoding (temperature 1.0).
CurationSummary generate_sft_corpus(const std::vector<Sample>& samples, Backend& teacher,
                                    const EngineConfig& config, const CurationOptions& opts,
                                    const std::filesystem::path& out_dir);

// Writes `out_dir`/rl_corpus.jsonl (retained only) and rl_progress.jsonl.
CurationSummary filter_rl_corpus(const std::vector<Sample>& samples, Backend& model,
                                 const EngineConfig& config, const CurationOptions& opts,
                                 const std::filesystem::path& out_dir);

// Per-sample building blocks, exposed for tests.
std::optional<SftRecord> curate_sft_sample(const Sample& sample, Backend& teacher,
                                           const EngineConfig& config, const CurationOptions& opts,
                                           int& attempts_used);
RlRecord evaluate_rl_sample(const Sample& sample, Backend& model, const EngineConfig& config,
                            const CurationOptions& opts);

}  // namespace vtagent
