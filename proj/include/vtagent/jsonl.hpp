#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>

#include <json.hpp>

namespace vtagent {

using json = nlohmann::json;

// Calls fn(line_no, parsed) for every non-blank line; line numbers are 1-based.
// A line that is not valid JSON throws MalformedRecord.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

// Single append-only writer; each append is flushed as one complete line.
class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path, bool truncate);
  void append(const json& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

// Compact, key-sorted serialization used everywhere a record hits disk.
inline std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace vtagent
