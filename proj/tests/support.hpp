#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vtagent/backend.hpp"
#include "vtagent/data_model.hpp"
#include "vtagent/grammar.hpp"

namespace fs = std::filesystem;

namespace testing {

// Unique scratch directory, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path = fs::temp_directory_path() /
           ("vtagent_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  fs::path operator/(const std::string& name) const { return path / name; }
};

inline void write_file(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// n tiny "frames" under dir/<video>/, one file per frame.
inline std::vector<vtagent::FrameRef> make_frames(const fs::path& dir, const std::string& video,
                                                  int n) {
  std::vector<vtagent::FrameRef> frames;
  for (int i = 0; i < n; ++i) {
    const fs::path p = dir / video / ("f" + std::to_string(i) + ".png");
    write_file(p, "\x89PNG frame " + video + " " + std::to_string(i));
    frames.push_back({i, p.string(), 0.5 * i});
  }
  return frames;
}

inline std::string gold_for(int i) { return "word" + std::to_string(i); }
inline std::string question_for(int i) {
  return "What is written on the sign in clip " + std::to_string(i) + "?";
}

// Synthetic manifest: sample i has `frames` frames, question_for(i), gold_for(i)
// and, when `annotate`, pseudo keyframe {i % frames}.
inline std::vector<vtagent::Sample> synthetic_samples(const fs::path& dir, int count, int frames,
                                                      bool annotate = false) {
  std::vector<vtagent::Sample> out;
  for (int i = 0; i < count; ++i) {
    vtagent::Sample s;
    s.sample_id = "s" + std::to_string(i);
    s.video_id = "v" + std::to_string(i);
    s.frames = make_frames(dir, s.video_id, frames);
    s.question = question_for(i);
    s.gold_answers = {gold_for(i)};
    s.split_tag = i % 2 ? "odd" : "even";
    if (annotate) s.pseudo_keyframes = std::vector<int>{i % frames};
    out.push_back(std::move(s));
  }
  return out;
}

inline fs::path write_synthetic_manifest(const fs::path& dir, int count, int frames,
                                         bool annotate = false) {
  vtagent::DatasetManifest m;
  m.samples = synthetic_samples(dir, count, frames, annotate);
  m.source_uri = "synthetic";
  const fs::path path = dir / "manifest.jsonl";
  vtagent::write_manifest(m, path);
  return path;
}

inline std::string last_user_text(const vtagent::GenerationRequest& req) {
  std::string text;
  for (const auto& p : req.messages.back().parts)
    if (const auto* t = std::get_if<vtagent::TextPart>(&p)) text += t->text + "\n";
  return text;
}

inline bool asks_for_answer(const vtagent::GenerationRequest& req) {
  return last_user_text(req).find("answer: <your answer>") != std::string::npos;
}

inline int question_number(const vtagent::GenerationRequest& req) {
  const std::string text = vtagent::request_text(req);
  const std::string key = "sign in clip ";
  const auto at = text.find(key);
  if (at == std::string::npos) return -1;
  return std::stoi(text.substr(at + key.size()));
}

inline std::string select_turn(const std::vector<int>& ids) {
  std::string list;
  for (std::size_t k = 0; k < ids.size(); ++k) list += (k ? ", " : "") + std::to_string(ids[k]);
  return "<reasoning>The sign is visible there.</reasoning>\n<action>select key frame: [" + list +
         "]</action>";
}

inline std::string answer_turn(const std::string& text) {
  return "<reasoning>Reading the sign.</reasoning>\n<action>answer: " + text + "</action>";
}

// Well-behaved agent: selects frame (i % 4) of clip i, then answers gold_for(i).
inline vtagent::ScriptedBackend::Responder oracle_responder() {
  return [](const vtagent::GenerationRequest& req) {
    const int q = question_number(req);
    if (asks_for_answer(req)) return answer_turn(gold_for(q));
    return select_turn({q % 4});
  };
}

// Rule file for the scripted backend: clip q selects frame q % 4 with a tagged
// reasoning, and the tag routes the answer turn to gold_for(q).
inline fs::path write_routing_script(const fs::path& dir, int count) {
  std::string text;
  auto tag = [](int q) { return "Clip " + std::to_string(q) + " sign located."; };
  for (int q = 0; q < count; ++q)
    text += vtagent::json{{"match", tag(q)}, {"response", answer_turn(gold_for(q))}}.dump() + "\n";
  for (int q = 0; q < count; ++q) {
    const std::string select = "<reasoning>" + tag(q) + "</reasoning>\n<action>select key frame: [" +
                               std::to_string(q % 4) + "]</action>";
    text += vtagent::json{{"match", "sign in clip " + std::to_string(q) + "?"}, {"response", select}}
                .dump() +
            "\n";
  }
  const fs::path p = dir / "script.jsonl";
  write_file(p, text);
  return p;
}

}  // namespace testing
