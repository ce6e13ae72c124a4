#include "vtagent/jsonl.hpp"

#include "vtagent/error.hpp"

namespace vtagent {

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json parsed;
    try {
      parsed = json::parse(line);
    } catch (const json::parse_error&) {
      throw MalformedRecord(line_no, "invalid JSON");
    }
    fn(line_no, parsed);
  }
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool truncate) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
}

void JsonlWriter::append(const json& record) {
  std::lock_guard lock(mu_);
  out_ << dump_line(record) << '\n';
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
}

}  // namespace vtagent
