#include <httplib.h>

#include <fstream>
#include <sstream>

#include "vtagent/backend.hpp"
#include "vtagent/error.hpp"

namespace vtagent {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = base_url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

std::string mime_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

std::string image_url(const EndpointConfig& config, const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingFrameFile(path);
  if (config.image_mode == EndpointConfig::ImageMode::FileUrl)
    return "file://" + std::filesystem::absolute(path).lexically_normal().string();
  std::ifstream in(path, std::ios::binary);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return "data:" + mime_for(path) + ";base64," + base64_encode(bytes.str());
}

void apply_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
  const auto sec = timeout.count() / 1000;
  const auto usec = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

}  // namespace

json chat_completions_body(const EndpointConfig& config, const GenerationRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json content = json::array();
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p))
        content.push_back({{"type", "text"}, {"text", t->text}});
      else {
        const std::string url = image_url(config, std::get<ImagePart>(p).path);
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
      }
    }
    messages.push_back({{"role", role_name(m.role)}, {"content", std::move(content)}});
  }
  json body = {{"model", config.model},
               {"messages", std::move(messages)},
               {"max_tokens", request.max_new_tokens},
               {"temperature", request.temperature}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::string read_chat_completion(const json& response) {
  auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty()) throw ResponseEmpty();
  const json& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].contains("content")) throw ResponseEmpty();
  const json& content = first["message"]["content"];
  std::string text;
  if (content.is_string()) {
    text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content)
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
  }
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ResponseEmpty();
  return text;
}

std::string http_complete(const EndpointConfig& config, const GenerationRequest& request) {
  check_request(request);
  const auto url = split_base_url(config.base_url);
  const std::string body = chat_completions_body(config, request).dump();

  httplib::Client client(url.origin);
  apply_timeouts(client, config.timeout);
  httplib::Headers headers;
  if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(url.prefix + "/chat/completions", headers, body, "application/json");
  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    if (res.error() == httplib::Error::ConnectionTimeout || elapsed >= config.timeout)
      throw BackendTimeout();
    throw BackendUnavailable(httplib::to_string(res.error()));
  }
  if (res->status == 429) {
    std::optional<std::string> retry_after;
    if (res->has_header("Retry-After")) retry_after = res->get_header_value("Retry-After");
    throw BackendUnavailable("HTTP 429", retry_after);
  }
  if (res->status < 200 || res->status >= 300)
    throw BackendUnavailable("HTTP " + std::to_string(res->status));

  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::parse_error&) {
    throw BackendUnavailable("response is not JSON");
  }
  return read_chat_completion(parsed);
}

bool endpoint_reachable(const EndpointConfig& config) {
  const auto url = split_base_url(config.base_url);
  httplib::Client client(url.origin);
  apply_timeouts(client, std::min(config.timeout, std::chrono::milliseconds(5000)));
  auto res = client.Get(url.prefix + "/models");
  return static_cast<bool>(res);
}

}  // namespace vtagent
