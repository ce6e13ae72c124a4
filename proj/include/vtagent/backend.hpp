#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "vtagent/jsonl.hpp"

namespace vtagent {

struct TextPart {
  std::string text;
  bool operator==(const TextPart&) const = default;
};

struct ImagePart {
  std::string path;
  int label = 0;  // frame index shown to the model
  bool operator==(const ImagePart&) const = default;
};

using Part = std::variant<TextPart, ImagePart>;

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);
Role role_from_name(std::string_view name);

struct Message {
  Role role = Role::User;
  std::vector<Part> parts;
  bool operator==(const Message&) const = default;
};

struct GenerationRequest {
  std::vector<Message> messages;
  int max_new_tokens = 512;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  bool operator==(const GenerationRequest&) const = default;
};

// Throws ConfigError when the request violates its invariants.
void check_request(const GenerationRequest& request);

std::size_t count_images(const Message& message);
std::size_t count_images(const GenerationRequest& request);
// Concatenation of every text part, in order; handy for rule matching.
std::string request_text(const GenerationRequest& request);

json request_to_json(const GenerationRequest& request);
GenerationRequest request_from_json(const json& j);

// Key-sorted compact JSON of the request. Equal requests give equal bytes.
std::string canonicalize(const GenerationRequest& request);
// Lowercase hex SHA-256 of canonicalize(request).
std::string request_digest(const GenerationRequest& request);

struct Transcript {
  std::string request_digest;
  std::string response_text;
  std::int64_t latency_ms = 0;
  std::string backend_id;
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Raw model text. Throws BackendUnavailable, BackendTimeout or ResponseEmpty.
  virtual std::string complete(const GenerationRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Canned responses. Rules (substring of request_text -> response) are checked
// first, in insertion order; otherwise the FIFO queue is consumed. Access is
// serialized internally.
class ScriptedBackend final : public Backend {
 public:
  using Responder = std::function<std::string(const GenerationRequest&)>;

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> queue);
  explicit ScriptedBackend(Responder responder);

  void push(std::string response);
  void add_rule(std::string match, std::string response);

  std::string complete(const GenerationRequest& request) override;
  std::string id() const override { return "scripted"; }
  std::size_t calls() const;
  std::size_t remaining() const;

  // JSONL lines {"match": optional string, "response": string}.
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::deque<std::string> queue_;
  std::vector<std::pair<std::string, std::string>> rules_;
  Responder responder_;
  std::size_t calls_ = 0;
};

// Append-only line-delimited transcript store keyed by request digest; the
// newest record for a digest wins. Concurrent reads, exclusive writes.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::filesystem::path path);

  std::optional<Transcript> find(const std::string& digest) const;
  void record(const GenerationRequest& request, const std::string& response,
              std::int64_t latency_ms, const std::string& backend_id);
  void record(const Transcript& transcript);
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Transcript> entries_;
};

// Serves stored responses. Strict mode never falls through; otherwise misses
// go to `inner` and are recorded.
class ReplayBackend final : public Backend {
 public:
  ReplayBackend(std::shared_ptr<TranscriptStore> store, bool strict,
                std::shared_ptr<Backend> inner = nullptr);
  std::string complete(const GenerationRequest& request) override;
  std::string id() const override { return "replay"; }

 private:
  std::shared_ptr<TranscriptStore> store_;
  bool strict_;
  std::shared_ptr<Backend> inner_;
};

// Forwards to `inner` and records every successful completion.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<TranscriptStore> store);
  std::string complete(const GenerationRequest& request) override;
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<TranscriptStore> store_;
};

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;   // empty: no Authorization header
  enum class ImageMode { DataUri, FileUrl } image_mode = ImageMode::DataUri;
  std::chrono::milliseconds timeout{120000};
};

// Chat-completions wire body for `request` (images resolved per config).
json chat_completions_body(const EndpointConfig& config, const GenerationRequest& request);
// Content of choices[0].message; throws ResponseEmpty when absent or blank.
std::string read_chat_completion(const json& response);

// One POST per call, never retried here; retries belong to the engine.
std::string http_complete(const EndpointConfig& config, const GenerationRequest& request);

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(EndpointConfig config) : config_(std::move(config)) {}
  std::string complete(const GenerationRequest& request) override {
    return http_complete(config_, request);
  }
  std::string id() const override { return "http:" + config_.model; }
  const EndpointConfig& config() const { return config_; }

 private:
  EndpointConfig config_;
};

// Transport-level reachability probe used at CLI preflight. Any HTTP status
// counts as reachable.
bool endpoint_reachable(const EndpointConfig& config);

std::string base64_encode(std::string_view bytes);

}  // namespace vtagent
