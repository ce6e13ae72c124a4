#include "vtagent/data_model.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>
#include <unordered_set>

#include "vtagent/error.hpp"
#include "vtagent/jsonl.hpp"

namespace fs = std::filesystem;

namespace vtagent {

namespace {

std::string require_string(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) throw MalformedRecord(line, std::string("missing field ") + key);
  if (!it->is_string()) throw MalformedRecord(line, std::string(key) + " must be a string");
  return it->get<std::string>();
}

Sample parse_sample(const json& rec, std::size_t line) {
  if (!rec.is_object()) throw MalformedRecord(line, "record is not an object");
  Sample s;
  s.sample_id = require_string(rec, "sample_id", line);
  s.video_id = require_string(rec, "video_id", line);
  s.question = require_string(rec, "question", line);
  if (auto it = rec.find("split"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) throw MalformedRecord(line, "split must be a string");
    s.split_tag = it->get<std::string>();
  }

  auto answers = rec.find("answers");
  if (answers == rec.end()) throw MalformedRecord(line, "missing field answers");
  if (!answers->is_array()) throw MalformedRecord(line, "answers must be an array");
  for (const auto& a : *answers) {
    if (!a.is_string()) throw MalformedRecord(line, "answers must contain strings");
    s.gold_answers.push_back(a.get<std::string>());
  }

  auto frames = rec.find("frames");
  if (frames == rec.end()) throw MalformedRecord(line, "missing field frames");
  if (!frames->is_array()) throw MalformedRecord(line, "frames must be an array");
  for (const auto& f : *frames) {
    if (!f.is_object()) throw MalformedRecord(line, "frame entry is not an object");
    auto idx = f.find("index");
    auto path = f.find("path");
    if (idx == f.end() || !idx->is_number_integer())
      throw MalformedRecord(line, "frame index must be an integer");
    if (path == f.end() || !path->is_string())
      throw MalformedRecord(line, "frame path must be a string");
    FrameRef ref;
    ref.index = idx->get<int>();
    ref.source_path = path->get<std::string>();
    if (auto t = f.find("t"); t != f.end() && !t->is_null()) {
      if (!t->is_number()) throw MalformedRecord(line, "frame t must be a number");
      ref.timestamp_s = t->get<double>();
    }
    s.frames.push_back(std::move(ref));
  }

  if (auto kf = rec.find("keyframes"); kf != rec.end() && !kf->is_null()) {
    if (!kf->is_array()) throw MalformedRecord(line, "keyframes must be an array");
    std::vector<int> ids;
    for (const auto& k : *kf) {
      if (!k.is_number_integer()) throw MalformedRecord(line, "keyframes must contain integers");
      ids.push_back(k.get<int>());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    s.pseudo_keyframes = std::move(ids);
  }

  try {
    check_sample(s);
  } catch (const MalformedRecord& e) {
    throw MalformedRecord(line, e.reason);
  }
  return s;
}

json sample_to_json(const Sample& s) {
  json frames = json::array();
  for (const auto& f : s.frames) {
    json jf = {{"index", f.index}, {"path", f.source_path}};
    if (f.timestamp_s) jf["t"] = *f.timestamp_s;
    frames.push_back(std::move(jf));
  }
  json rec = {{"sample_id", s.sample_id},
              {"video_id", s.video_id},
              {"question", s.question},
              {"answers", s.gold_answers},
              {"frames", std::move(frames)}};
  if (s.pseudo_keyframes) rec["keyframes"] = *s.pseudo_keyframes;
  if (!s.split_tag.empty()) rec["split"] = s.split_tag;
  return rec;
}

std::string collapse_ws_lower(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

void check_sample(const Sample& s) {
  if (s.sample_id.empty()) throw MalformedRecord(0, "empty sample_id");
  if (s.frames.empty()) throw MalformedRecord(0, "empty frames");
  if (s.gold_answers.empty()) throw MalformedRecord(0, "empty answers");
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    if (s.frames[i].index != static_cast<int>(i))
      throw MalformedRecord(0, "frame indices must be 0..n-1 in order");
    if (i > 0 && s.frames[i].timestamp_s && s.frames[i - 1].timestamp_s &&
        *s.frames[i].timestamp_s < *s.frames[i - 1].timestamp_s)
      throw MalformedRecord(0, "timestamps decrease with index");
  }
  if (s.pseudo_keyframes) {
    for (int k : *s.pseudo_keyframes)
      if (k < 0 || k >= s.frame_count()) throw MalformedRecord(0, "keyframe out of range");
  }
}

DatasetManifest load_manifest(const fs::path& path, const LoadOptions& opts) {
  if (!fs::exists(path)) throw Error("manifest not found: " + path.string());
  const fs::path root = opts.frames_root ? *opts.frames_root
                                         : fs::absolute(path).parent_path();
  DatasetManifest manifest;
  manifest.source_uri = path.string();
  std::unordered_set<std::string> seen;

  for_each_jsonl(path, [&](std::size_t line, const json& rec) {
    Sample s = parse_sample(rec, line);
    if (!seen.insert(s.sample_id).second) throw DuplicateSampleId(s.sample_id);
    for (auto& f : s.frames) {
      fs::path p(f.source_path);
      if (p.is_relative()) p = root / p;
      f.source_path = p.lexically_normal().string();
      if (opts.verify_files && !fs::exists(f.source_path)) throw MissingFrameFile(f.source_path);
    }
    manifest.samples.push_back(std::move(s));
  });
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  JsonlWriter out(path, /*truncate=*/true);
  for (const auto& s : manifest.samples) out.append(sample_to_json(s));
}

std::vector<int> uniform_positions(int count, int n) {
  std::vector<int> pos;
  if (count <= 0) return pos;
  if (n >= count) {
    for (int i = 0; i < count; ++i) pos.push_back(i);
    return pos;
  }
  if (n <= 1) return {0};
  for (int k = 0; k < n; ++k)
    pos.push_back(static_cast<int>(static_cast<long long>(k) * (count - 1) / (n - 1)));
  return pos;
}

Sample sample_frames(const Sample& sample, const SamplingPolicy& policy) {
  if (policy.kind == SamplingPolicy::Kind::All || policy.n >= sample.frame_count()) return sample;

  const auto keep = uniform_positions(sample.frame_count(), policy.n);
  Sample out = sample;
  out.frames.clear();
  out.original_indices.clear();
  std::vector<int> remap(sample.frames.size(), -1);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    const int src = keep[j];
    FrameRef f = sample.frames[src];
    f.index = static_cast<int>(j);
    out.frames.push_back(std::move(f));
    out.original_indices.push_back(sample.original_indices.empty()
                                       ? src
                                       : sample.original_indices[src]);
    remap[src] = static_cast<int>(j);
  }
  if (sample.pseudo_keyframes) {
    std::vector<int> kept;
    for (int k : *sample.pseudo_keyframes)
      if (remap[k] >= 0) kept.push_back(remap[k]);
    out.pseudo_keyframes = std::move(kept);
  }
  return out;
}

std::string dedupe_question_key(const std::string& question) {
  return collapse_ws_lower(question);
}

std::vector<Sample> dedupe_samples(const std::vector<Sample>& samples) {
  using Key = std::tuple<std::string, std::string, std::vector<std::string>>;
  std::set<Key> seen;
  std::vector<Sample> out;
  for (const auto& s : samples) {
    auto golds = s.gold_answers;
    std::sort(golds.begin(), golds.end());
    if (seen.emplace(s.video_id, dedupe_question_key(s.question), std::move(golds)).second)
      out.push_back(s);
  }
  return out;
}

}  // namespace vtagent
