#include "vtagent/backend.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "vtagent/error.hpp"

namespace vtagent {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw ConfigError("unknown role: " + std::string(name));
}

void check_request(const GenerationRequest& request) {
  if (request.messages.empty()) throw ConfigError("request has no messages");
  if (request.messages.back().role != Role::User)
    throw ConfigError("last message of a request must have role user");
  for (const auto& m : request.messages)
    if (m.parts.empty()) throw ConfigError("message with no parts");
  if (!(request.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (request.max_new_tokens <= 0) throw ConfigError("max_new_tokens must be positive");
}

std::size_t count_images(const Message& message) {
  std::size_t n = 0;
  for (const auto& p : message.parts) n += std::holds_alternative<ImagePart>(p);
  return n;
}

std::size_t count_images(const GenerationRequest& request) {
  std::size_t n = 0;
  for (const auto& m : request.messages) n += count_images(m);
  return n;
}

std::string request_text(const GenerationRequest& request) {
  std::string out;
  for (const auto& m : request.messages)
    for (const auto& p : m.parts)
      if (const auto* t = std::get_if<TextPart>(&p)) {
        out += t->text;
        out += '\n';
      }
  return out;
}

json request_to_json(const GenerationRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json parts = json::array();
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p))
        parts.push_back({{"type", "text"}, {"text", t->text}});
      else {
        const auto& img = std::get<ImagePart>(p);
        parts.push_back({{"type", "image"}, {"path", img.path}, {"label", img.label}});
      }
    }
    messages.push_back({{"role", role_name(m.role)}, {"parts", std::move(parts)}});
  }
  json j = {{"messages", std::move(messages)},
            {"max_new_tokens", request.max_new_tokens},
            {"temperature", request.temperature}};
  if (request.seed) j["seed"] = *request.seed;
  return j;
}

GenerationRequest request_from_json(const json& j) {
  GenerationRequest r;
  for (const auto& jm : j.at("messages")) {
    Message m;
    m.role = role_from_name(jm.at("role").get<std::string>());
    for (const auto& jp : jm.at("parts")) {
      const auto type = jp.at("type").get<std::string>();
      if (type == "text")
        m.parts.emplace_back(TextPart{jp.at("text").get<std::string>()});
      else if (type == "image")
        m.parts.emplace_back(ImagePart{jp.at("path").get<std::string>(), jp.at("label").get<int>()});
      else
        throw SchemaMismatch("unknown part type: " + type);
    }
    r.messages.push_back(std::move(m));
  }
  r.max_new_tokens = j.at("max_new_tokens").get<int>();
  r.temperature = j.at("temperature").get<double>();
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) r.seed = it->get<std::int64_t>();
  return r;
}

std::string canonicalize(const GenerationRequest& request) {
  return dump_line(request_to_json(request));
}

std::string request_digest(const GenerationRequest& request) {
  const std::string canon = canonicalize(request);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(canon.data(), canon.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

// ---- scripted --------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<std::string> queue)
    : queue_(queue.begin(), queue.end()) {}

ScriptedBackend::ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

void ScriptedBackend::push(std::string response) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(response));
}

void ScriptedBackend::add_rule(std::string match, std::string response) {
  std::lock_guard lock(mu_);
  rules_.emplace_back(std::move(match), std::move(response));
}

std::string ScriptedBackend::complete(const GenerationRequest& request) {
  std::string out;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    if (responder_) {
      out = responder_(request);
    } else {
      bool matched = false;
      if (!rules_.empty()) {
        const std::string text = request_text(request);
        for (const auto& [match, response] : rules_) {
          if (text.find(match) != std::string::npos) {
            out = response;
            matched = true;
            break;
          }
        }
      }
      if (!matched) {
        if (queue_.empty()) throw BackendUnavailable("script exhausted");
        out = std::move(queue_.front());
        queue_.pop_front();
      }
    }
  }
  if (out.empty()) throw ResponseEmpty();
  return out;
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  auto backend = std::make_unique<ScriptedBackend>();
  for_each_jsonl(path, [&](std::size_t line, const json& rec) {
    auto resp = rec.find("response");
    if (!rec.is_object() || resp == rec.end() || !resp->is_string())
      throw MalformedRecord(line, "script entry needs a string field response");
    if (auto m = rec.find("match"); m != rec.end() && m->is_string())
      backend->add_rule(m->get<std::string>(), resp->get<std::string>());
    else
      backend->push(resp->get<std::string>());
  });
  return backend;
}

// ---- transcript store ------------------------------------------------------

TranscriptStore::TranscriptStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for_each_jsonl(path_, [&](std::size_t line, const json& rec) {
    try {
      Transcript t;
      t.request_digest = rec.at("request_digest").get<std::string>();
      t.response_text = rec.at("response_text").get<std::string>();
      t.latency_ms = rec.value("latency_ms", std::int64_t{0});
      t.backend_id = rec.value("backend_id", std::string{});
      entries_[t.request_digest] = std::move(t);
    } catch (const json::exception&) {
      throw MalformedRecord(line, "transcript record needs request_digest and response_text");
    }
  });
}

std::optional<Transcript> TranscriptStore::find(const std::string& digest) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranscriptStore::record(const GenerationRequest& request, const std::string& response,
                             std::int64_t latency_ms, const std::string& backend_id) {
  record(Transcript{request_digest(request), response, latency_ms, backend_id});
}

void TranscriptStore::record(const Transcript& t) {
  std::unique_lock lock(mu_);
  {
    if (path_.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path_.parent_path(), ec);
    }
    std::ofstream out(path_, std::ios::app);
    json rec = {{"request_digest", t.request_digest},
                {"response_text", t.response_text},
                {"latency_ms", t.latency_ms},
                {"backend_id", t.backend_id}};
    out << dump_line(rec) << '\n';
    out.flush();
    if (!out) throw StoreWriteFailed(path_.string());
  }
  entries_[t.request_digest] = t;
}

std::size_t TranscriptStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

// ---- replay / recording ----------------------------------------------------

ReplayBackend::ReplayBackend(std::shared_ptr<TranscriptStore> store, bool strict,
                             std::shared_ptr<Backend> inner)
    : store_(std::move(store)), strict_(strict), inner_(std::move(inner)) {}

std::string ReplayBackend::complete(const GenerationRequest& request) {
  if (auto hit = store_->find(request_digest(request))) return hit->response_text;
  if (strict_ || !inner_) throw BackendUnavailable("cache miss");
  const auto start = std::chrono::steady_clock::now();
  std::string response = inner_->complete(request);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  store_->record(request, response, ms, inner_->id());
  return response;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner,
                                   std::shared_ptr<TranscriptStore> store)
    : inner_(std::move(inner)), store_(std::move(store)) {}

std::string RecordingBackend::complete(const GenerationRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  std::string response = inner_->complete(request);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  store_->record(request, response, ms, inner_->id());
  return response;
}

}  // namespace vtagent
