#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vtagent/backend.hpp"
#include "vtagent/config.hpp"

namespace vtagent::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;

// Non-replay backends record into `store`, or into <out_dir>/transcripts.jsonl.
// Throws ConfigError for incomplete settings and BackendUnavailable when an
// http endpoint fails the preflight probe.
std::shared_ptr<Backend> make_backend(const RunConfig& config);

std::vector<Sample> load_samples(const RunConfig& config);

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_oracle(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_curate_sft(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_curate_rl(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_grpo(const RunConfig& config, std::ostream& out, std::ostream& err);

struct ReportInputs {
  std::vector<std::pair<std::string, std::string>> scores;  // (system name, score log)
  std::string partition_dir;
  std::string framewise;
};
int cmd_report(const RunConfig& config, const ReportInputs& inputs, std::ostream& out,
               std::ostream& err);

int cmd_config_show(const RunConfig& config, std::ostream& out);

// Full command line without the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env);

}  // namespace vtagent::cli
