#include "vtagent/engine.hpp"

#include <map>
#include <thread>
#include <unordered_set>

#include "vtagent/error.hpp"
#include "vtagent/jsonl.hpp"
#include "vtagent/parallel.hpp"

namespace vtagent {

namespace {

struct PromptTemplate {
  std::string anchor_instruction;
  std::string answer_instruction;
  std::string answer_context;  // turn-2 replay of the anchoring request, text only
};

const std::map<std::string, PromptTemplate, std::less<>>& templates() {
  static const std::map<std::string, PromptTemplate, std::less<>> registry = {
      {"default",
       {"You are given frames sampled from a video. Each frame is preceded by its label "
        "\"Frame <id>:\". Find the frames whose visible scene text is most relevant to the "
        "question. First reason step by step inside <reasoning></reasoning>. Then output "
        "exactly one action inside <action></action> in the form "
        "\"select key frame: [id1, id2, ...]\" using the frame ids shown.",
        "Answer the question using the text visible in the frames below. First reason step by "
        "step inside <reasoning></reasoning>. Then output exactly one action inside "
        "<action></action> in the form \"answer: <your answer>\". Keep the answer short.",
        "The video frames were shown to you earlier. Select the keyframes relevant to the "
        "question with a \"select key frame: [...]\" action."}},
  };
  return registry;
}

const PromptTemplate& lookup(const std::string& id) {
  auto it = templates().find(id);
  if (it == templates().end()) throw ConfigError("unknown prompt template: " + id);
  return it->second;
}

void append_frames(Message& msg, const Sample& sample, const std::vector<int>& positions) {
  for (int pos : positions) {
    const auto& f = sample.frames.at(static_cast<std::size_t>(pos));
    msg.parts.emplace_back(TextPart{"Frame " + std::to_string(f.index) + ":"});
    msg.parts.emplace_back(ImagePart{f.source_path, f.index});
  }
}

std::vector<int> all_positions(const Sample& sample) {
  std::vector<int> pos(sample.frames.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  return pos;
}

GenerationRequest make_request(std::vector<Message> messages, const EngineConfig& config,
                               std::int64_t seed) {
  GenerationRequest req;
  req.messages = std::move(messages);
  req.max_new_tokens = config.max_new_tokens;
  req.temperature = config.temperature;
  req.seed = seed;
  return req;
}

}  // namespace

std::string_view fallback_name(FallbackPolicy p) {
  return p == FallbackPolicy::UniformKeyframes ? "uniform" : "direct";
}

FallbackPolicy fallback_from_name(std::string_view name) {
  if (name == "uniform" || name == "UniformKeyframes") return FallbackPolicy::UniformKeyframes;
  if (name == "direct" || name == "DirectAnswer") return FallbackPolicy::DirectAnswer;
  throw ConfigError("unknown fallback policy: " + std::string(name));
}

void validate_config(const EngineConfig& config) {
  if (config.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (config.keyframe_cap < 1) throw ConfigError("keyframe cap must be >= 1");
  if (config.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (!(config.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (config.backoff_base_ms < 0) throw ConfigError("backoff must be >= 0");
  lookup(config.anchor_template_id);
  lookup(config.answer_template_id);
}

const std::string& Trajectory::answer() const {
  return std::get<Answer>(turn2.action).text;
}

// ---- prompts ---------------------------------------------------------------

std::vector<Message> build_anchor_prompt(const Sample& sample, const EngineConfig& config) {
  const auto& tpl = lookup(config.anchor_template_id);
  Message msg{Role::User, {TextPart{tpl.anchor_instruction + "\nQuestion: " + sample.question}}};
  append_frames(msg, sample, all_positions(sample));
  return {std::move(msg)};
}

std::vector<Message> build_answer_prompt(const Sample& sample, const Turn& turn1,
                                         const KeyframeSet& keyframes,
                                         const EngineConfig& config) {
  const auto& anchor = lookup(config.anchor_template_id);
  const auto& answer = lookup(config.answer_template_id);
  Message context{Role::User,
                  {TextPart{anchor.answer_context + "\nQuestion: " + sample.question}}};
  Message prior{Role::Assistant, {TextPart{render_turn(turn1)}}};
  Message focus{Role::User, {TextPart{"Selected keyframes follow. " + answer.answer_instruction +
                                      "\nQuestion: " + sample.question}}};
  append_frames(focus, sample, keyframes.ids);
  return {std::move(context), std::move(prior), std::move(focus)};
}

std::vector<Message> build_direct_answer_prompt(const Sample& sample,
                                                const std::vector<int>& frame_positions,
                                                const EngineConfig& config) {
  const auto& tpl = lookup(config.answer_template_id);
  Message msg{Role::User, {TextPart{tpl.answer_instruction + "\nQuestion: " + sample.question}}};
  append_frames(msg, sample, frame_positions);
  return {std::move(msg)};
}

// ---- episode ---------------------------------------------------------------

std::int64_t derive_seed(std::int64_t base, std::string_view sample_id, std::string_view stage,
                         int attempt) {
  // FNV-1a over the fields, then a splitmix64 finalizer.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  mix(std::to_string(base));
  mix(sample_id);
  mix(stage);
  mix(std::to_string(attempt));
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return static_cast<std::int64_t>(h & 0x7fffffffULL);
}

std::string complete_with_retry(Backend& backend, const GenerationRequest& request,
                                const EngineConfig& config) {
  for (int attempt = 1;; ++attempt) {
    try {
      return backend.complete(request);
    } catch (const BackendError&) {
      if (attempt >= config.max_attempts) throw;
      if (config.backoff_base_ms > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(static_cast<std::int64_t>(config.backoff_base_ms) << (attempt - 1)));
    }
  }
}

Trajectory run_episode(const Sample& sample, Backend& backend, const EngineConfig& config,
                       int salt) {
  Trajectory traj;
  traj.sample_id = sample.sample_id;
  const std::string stage_prefix = "s" + std::to_string(salt) + ":";

  auto call = [&](std::vector<Message> messages, std::string_view stage, int attempt) {
    auto req = make_request(std::move(messages), config,
                            derive_seed(config.seed, sample.sample_id,
                                        stage_prefix + std::string(stage), attempt));
    traj.digests.push_back(request_digest(req));
    return complete_with_retry(backend, req, config);
  };

  // Turn 1: keyframe anchoring.
  bool anchored = false;
  const auto anchor_messages = build_anchor_prompt(sample, config);
  for (int attempt = 1; attempt <= config.max_attempts && !anchored; ++attempt) {
    traj.turn1_attempts = attempt;
    traj.turn1_raw = call(anchor_messages, "anchor", attempt);
    try {
      Turn t = parse_turn(traj.turn1_raw);
      const auto* sel = std::get_if<SelectKeyframes>(&t.action);
      if (!sel) continue;
      traj.keyframes = validate_keyframes(*sel, sample.frame_count(), config.keyframe_cap);
      traj.turn1 = std::move(t);
      anchored = true;
    } catch (const GrammarError&) {
    } catch (const EmptySelection&) {
    }
  }

  std::vector<Message> answer_messages;
  if (!anchored) {
    traj.used_fallback = true;
    traj.keyframes = {};
    if (config.fallback_policy == FallbackPolicy::UniformKeyframes) {
      const auto ids = uniform_positions(sample.frame_count(), config.keyframe_cap);
      SelectKeyframes sel;
      sel.frame_ids.assign(ids.begin(), ids.end());
      traj.keyframes.ids = ids;
      traj.turn1 = Turn{"", sel, traj.turn1_raw};
      answer_messages = build_answer_prompt(sample, *traj.turn1, traj.keyframes, config);
    } else {
      answer_messages = build_direct_answer_prompt(sample, all_positions(sample), config);
    }
  } else {
    answer_messages = build_answer_prompt(sample, *traj.turn1, traj.keyframes, config);
  }

  // Turn 2: keyframe-conditioned answering.
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    traj.turn2_attempts = attempt;
    const std::string raw = call(answer_messages, "answer", attempt);
    try {
      Turn t = parse_turn(raw);
      if (is_answer(t.action)) {
        traj.turn2 = std::move(t);
        return traj;
      }
    } catch (const GrammarError&) {
    }
    traj.turn2.raw = raw;
  }
  traj.turn2 = Turn{"", Answer{""}, traj.turn2.raw};
  traj.used_fallback = true;
  return traj;
}

// ---- log ---------------------------------------------------------------------

TrajectoryRecord to_record(const Trajectory& t) {
  TrajectoryRecord r;
  r.sample_id = t.sample_id;
  r.turn1_raw = t.turn1_raw;
  r.keyframe_ids = t.keyframes.ids;
  r.dropped = t.keyframes.dropped;
  r.turn2_raw = t.turn2.raw;
  r.answer = t.answer();
  r.used_fallback = t.used_fallback;
  r.turn1_attempts = t.turn1_attempts;
  r.turn2_attempts = t.turn2_attempts;
  r.digests = t.digests;
  return r;
}

json record_to_json(const TrajectoryRecord& r) {
  json dropped = json::array();
  for (const auto& d : r.dropped) dropped.push_back({d.raw_id, d.reason});
  json j = {{"sample_id", r.sample_id},
            {"turn1_raw", r.turn1_raw},
            {"keyframe_ids", r.keyframe_ids},
            {"dropped", std::move(dropped)},
            {"turn2_raw", r.turn2_raw},
            {"answer", r.answer},
            {"used_fallback", r.used_fallback},
            {"attempts", {r.turn1_attempts, r.turn2_attempts}},
            {"digests", r.digests}};
  if (r.error) j["error"] = *r.error;
  return j;
}

TrajectoryRecord record_from_json(const json& j) {
  TrajectoryRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.turn1_raw = j.value("turn1_raw", std::string{});
  r.keyframe_ids = j.value("keyframe_ids", std::vector<int>{});
  for (const auto& d : j.value("dropped", json::array()))
    r.dropped.push_back({d.at(0).get<std::int64_t>(), d.at(1).get<std::string>()});
  r.turn2_raw = j.value("turn2_raw", std::string{});
  r.answer = j.value("answer", std::string{});
  r.used_fallback = j.value("used_fallback", false);
  if (auto a = j.find("attempts"); a != j.end() && a->is_array() && a->size() == 2) {
    r.turn1_attempts = (*a)[0].get<int>();
    r.turn2_attempts = (*a)[1].get<int>();
  }
  r.digests = j.value("digests", std::vector<std::string>{});
  if (auto e = j.find("error"); e != j.end() && e->is_string()) r.error = e->get<std::string>();
  return r;
}

std::vector<TrajectoryRecord> load_trajectory_log(const std::filesystem::path& path) {
  std::vector<TrajectoryRecord> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      throw MalformedRecord(line, std::string("trajectory record: ") + e.what());
    }
  });
  return out;
}

BatchSummary run_batch(const std::vector<Sample>& samples, Backend& backend,
                       const EngineConfig& config, const std::filesystem::path& log_path,
                       bool resume) {
  validate_config(config);
  BatchSummary summary;
  summary.total = samples.size();

  std::unordered_set<std::string> done;
  if (resume && std::filesystem::exists(log_path)) {
    for (const auto& r : load_trajectory_log(log_path)) done.insert(r.sample_id);
  }
  std::vector<const Sample*> pending;
  for (const auto& s : samples) {
    if (done.count(s.sample_id)) ++summary.skipped;
    else pending.push_back(&s);
  }

  JsonlWriter writer(log_path, /*truncate=*/!resume);
  for_each_ordered<TrajectoryRecord>(
      pending.size(), config.parallelism,
      [&](std::size_t i) {
        const Sample& s = *pending[i];
        try {
          return to_record(run_episode(s, backend, config));
        } catch (const ConfigError&) {
          throw;
        } catch (const Error& e) {
          TrajectoryRecord failed;
          failed.sample_id = s.sample_id;
          failed.used_fallback = true;
          failed.error = e.what();
          return failed;
        }
      },
      [&](std::size_t, TrajectoryRecord rec) {
        ++summary.executed;
        if (rec.error) ++summary.failed;
        writer.append(record_to_json(rec));
      });
  return summary;
}

}  // namespace vtagent
