#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace vtagent {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration problems are fatal for a whole run (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// ---- data model ----------------------------------------------------------

struct MalformedRecord : Error {
  MalformedRecord(std::size_t line, std::string why)
      : Error("malformed record at line " + std::to_string(line) + ": " + why),
        line_no(line),
        reason(std::move(why)) {}
  std::size_t line_no;
  std::string reason;
};

struct DuplicateSampleId : Error {
  explicit DuplicateSampleId(std::string sample_id)
      : Error("duplicate sample_id: " + sample_id), id(std::move(sample_id)) {}
  std::string id;
};

struct MissingFrameFile : Error {
  explicit MissingFrameFile(std::string p)
      : Error("missing frame file: " + p), path(std::move(p)) {}
  std::string path;
};

// ---- grammar -------------------------------------------------------------

struct GrammarError : Error {
  GrammarError(const std::string& what, std::string raw_text)
      : Error(what), raw(std::move(raw_text)) {}
  std::string raw;
};

struct MissingActionBlock : GrammarError {
  explicit MissingActionBlock(std::string raw_text)
      : GrammarError("missing <action> block", std::move(raw_text)) {}
};

struct UnparsableAction : GrammarError {
  UnparsableAction(std::string action_payload, std::string raw_text)
      : GrammarError("unparsable action: " + action_payload, std::move(raw_text)),
        payload(std::move(action_payload)) {}
  std::string payload;
};

struct EmptySelection : Error {
  EmptySelection() : Error("no valid keyframe survived validation") {}
};

// ---- backends ------------------------------------------------------------

// All backend errors are retryable by the caller.
struct BackendError : Error {
  using Error::Error;
};

struct BackendUnavailable : BackendError {
  explicit BackendUnavailable(std::string why,
                              std::optional<std::string> retry_after_hdr = std::nullopt)
      : BackendError("backend unavailable: " + why),
        cause(std::move(why)),
        retry_after(std::move(retry_after_hdr)) {}
  std::string cause;
  std::optional<std::string> retry_after;
};

struct BackendTimeout : BackendError {
  BackendTimeout() : BackendError("backend timeout") {}
};

struct ResponseEmpty : BackendError {
  ResponseEmpty() : BackendError("backend returned an empty response") {}
};

struct StoreWriteFailed : Error {
  explicit StoreWriteFailed(const std::string& path)
      : Error("cannot write transcript store: " + path) {}
};

// ---- metrics / analysis --------------------------------------------------

struct EmptyScoreSet : Error {
  EmptyScoreSet() : Error("cannot aggregate an empty score set") {}
};

struct NotFrameSolvable : Error {
  explicit NotFrameSolvable(const std::string& sample_id)
      : Error("sample is not frame-solvable: " + sample_id) {}
};

struct NonFinite : Error {
  using Error::Error;
};

struct SchemaMismatch : Error {
  using Error::Error;
};

}  // namespace vtagent
