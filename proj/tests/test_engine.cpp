#include <doctest.h>

#include <mutex>
#include <set>

#include "support.hpp"
#include "vtagent/engine.hpp"
#include "vtagent/error.hpp"

using namespace vtagent;
using testing::TempDir;

namespace {

EngineConfig fast_config() {
  EngineConfig c;
  c.backoff_base_ms = 0;
  return c;
}

// Wraps a responder and keeps every request it saw.
struct Capture {
  std::mutex mu;
  std::vector<GenerationRequest> requests;
  ScriptedBackend::Responder inner;

  explicit Capture(ScriptedBackend::Responder r) : inner(std::move(r)) {}
  ScriptedBackend backend() {
    return ScriptedBackend([this](const GenerationRequest& req) {
      {
        std::lock_guard lock(mu);
        requests.push_back(req);
      }
      return inner(req);
    });
  }
};

std::set<std::string> image_paths(const GenerationRequest& req) {
  std::set<std::string> out;
  for (const auto& m : req.messages)
    for (const auto& p : m.parts)
      if (const auto* im = std::get_if<ImagePart>(&p)) out.insert(im->path);
  return out;
}

}  // namespace

TEST_CASE("two-turn episode with a well-behaved agent") {
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 6, 8);
  Capture cap(testing::oracle_responder());
  auto backend = cap.backend();
  const Sample& s = samples[5];
  const Trajectory t = run_episode(s, backend, fast_config());

  CHECK_FALSE(t.used_fallback);
  CHECK(t.keyframes.ids == std::vector<int>{1});
  CHECK(t.answer() == "word5");
  CHECK(t.turn1_attempts == 1);
  CHECK(t.turn2_attempts == 1);
  REQUIRE(cap.requests.size() == 2);
  CHECK(t.digests == std::vector<std::string>{request_digest(cap.requests[0]),
                                              request_digest(cap.requests[1])});

  // Anchoring sees every frame; answering sees exactly the keyframes.
  const auto& anchor = cap.requests[0];
  CHECK(count_images(anchor) == 8);
  CHECK(anchor.messages.size() == 1);
  const auto& answer = cap.requests[1];
  CHECK(count_images(answer) == 1);
  CHECK(image_paths(answer) == std::set<std::string>{s.frames[1].source_path});
  REQUIRE(answer.messages.size() == 3);
  CHECK(answer.messages[0].role == Role::User);
  CHECK(answer.messages[1].role == Role::Assistant);
  CHECK(answer.messages[2].role == Role::User);
  CHECK(std::get<TextPart>(answer.messages[1].parts[0]).text == render_turn(*t.turn1));
  CHECK_NOTHROW(check_request(answer));
}

TEST_CASE("answer prompt carries exactly |K| images for any selection") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 12)[0];
  const EngineConfig config = fast_config();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    SelectKeyframes sel;
    const int k = 1 + static_cast<int>(rng() % 10);
    for (int i = 0; i < k; ++i) sel.frame_ids.push_back(static_cast<std::int64_t>(rng() % 16) - 2);
    KeyframeSet ks;
    try {
      ks = validate_keyframes(sel, s.frame_count(), config.keyframe_cap);
    } catch (const EmptySelection&) {
      continue;
    }
    const Turn t1{"r", sel, ""};
    GenerationRequest req;
    req.messages = build_answer_prompt(s, t1, ks, config);
    CHECK(count_images(req) == ks.ids.size());
    std::set<std::string> expected;
    for (int id : ks.ids) expected.insert(s.frames[static_cast<std::size_t>(id)].source_path);
    CHECK(image_paths(req) == expected);
  }
}

TEST_CASE("parse failures are retried with fresh seeds") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 8)[0];
  ScriptedBackend backend({"I think frame 3.", "<action>select key frame: [42]</action>",
                           testing::select_turn({3}), "<action>answer:</action>",
                           testing::answer_turn("word0")});
  const Trajectory t = run_episode(s, backend, fast_config());
  CHECK_FALSE(t.used_fallback);
  CHECK(t.turn1_attempts == 3);
  CHECK(t.turn2_attempts == 2);
  CHECK(t.keyframes.ids == std::vector<int>{3});
  CHECK(t.answer() == "word0");
  CHECK(std::set<std::string>(t.digests.begin(), t.digests.end()).size() == t.digests.size());
}

TEST_CASE("uniform fallback after persistent anchoring failure") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 20)[0];
  Capture cap([](const GenerationRequest& req) {
    return testing::asks_for_answer(req) ? testing::answer_turn("word0") : std::string("garbage");
  });
  auto backend = cap.backend();
  EngineConfig config = fast_config();
  config.keyframe_cap = 4;
  const Trajectory t = run_episode(s, backend, config);
  CHECK(t.used_fallback);
  CHECK(t.turn1_attempts == config.max_attempts);
  CHECK(t.keyframes.ids == uniform_positions(20, 4));
  CHECK(t.answer() == "word0");
  CHECK(count_images(cap.requests.back()) == 4);
}

TEST_CASE("direct-answer fallback skips the selection") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 6)[0];
  Capture cap([](const GenerationRequest& req) {
    return testing::asks_for_answer(req) ? testing::answer_turn("word0") : std::string("<action>oops</action>");
  });
  auto backend = cap.backend();
  EngineConfig config = fast_config();
  config.fallback_policy = FallbackPolicy::DirectAnswer;
  const Trajectory t = run_episode(s, backend, config);
  CHECK(t.used_fallback);
  CHECK_FALSE(t.turn1.has_value());
  CHECK(t.keyframes.ids.empty());
  CHECK(t.answer() == "word0");
  CHECK(count_images(cap.requests.back()) == 6);
  CHECK(cap.requests.back().messages.size() == 1);
}

TEST_CASE("unanswerable turn 2 yields an empty answer") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 4)[0];
  ScriptedBackend backend([](const GenerationRequest& req) {
    return testing::asks_for_answer(req) ? std::string("<action>select key frame: [1]</action>")
                                         : testing::select_turn({1});
  });
  const Trajectory t = run_episode(s, backend, fast_config());
  CHECK(t.used_fallback);
  CHECK(t.answer().empty());
  CHECK(t.turn2_attempts == 5);
}

TEST_CASE("transient backend errors are retried, persistent ones surface") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 4)[0];
  std::atomic<int> calls{0};
  ScriptedBackend flaky([&](const GenerationRequest& req) -> std::string {
    if (++calls % 3 != 0) throw BackendUnavailable("HTTP 429", "1");
    return testing::oracle_responder()(req);
  });
  const Trajectory t = run_episode(s, flaky, fast_config());
  CHECK_FALSE(t.used_fallback);
  CHECK(calls == 6);

  ScriptedBackend dead([](const GenerationRequest&) -> std::string { throw BackendTimeout(); });
  CHECK_THROWS_AS(run_episode(s, dead, fast_config()), BackendTimeout);
}

TEST_CASE("backoff grows exponentially") {
  std::atomic<int> calls{0};
  ScriptedBackend b([&](const GenerationRequest&) -> std::string {
    if (++calls < 4) throw BackendUnavailable("busy");
    return "ok";
  });
  EngineConfig c;
  c.backoff_base_ms = 20;
  GenerationRequest req;
  req.messages = {Message{Role::User, {TextPart{"x"}}}};
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(complete_with_retry(b, req, c) == "ok");
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0).count();
  CHECK(ms >= 20 + 40 + 80);
}

TEST_CASE("config validation rejects unknown templates") {
  EngineConfig c = fast_config();
  c.answer_template_id = "nope";
  CHECK_THROWS_AS(validate_config(c), ConfigError);
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 2, 4);
  ScriptedBackend b(testing::oracle_responder());
  CHECK_THROWS_AS(run_batch(samples, b, c, dir / "log.jsonl", false), ConfigError);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::int64_t> seeds;
  for (int a = 1; a <= 5; ++a)
    for (const char* stage : {"s0:anchor", "s0:answer", "s1:anchor"})
      for (const char* id : {"a", "b"}) seeds.insert(derive_seed(7, id, stage, a));
  CHECK(seeds.size() == 30);
  CHECK(derive_seed(7, "a", "x", 1) == derive_seed(7, "a", "x", 1));
  CHECK(derive_seed(7, "a", "x", 1) != derive_seed(8, "a", "x", 1));
  for (auto s : seeds) CHECK(s >= 0);
}

TEST_CASE("batch log is ordered, deterministic across parallelism, and resumable") {
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 24, 8);
  std::string reference;
  for (int par : {1, 3, 8}) {
    ScriptedBackend b(testing::oracle_responder());
    EngineConfig c = fast_config();
    c.parallelism = par;
    const auto log = dir / ("log" + std::to_string(par) + ".jsonl");
    const auto summary = run_batch(samples, b, c, log, false);
    CHECK(summary.executed == 24);
    CHECK(summary.failed == 0);
    const auto text = testing::read_file(log);
    if (reference.empty()) reference = text;
    CHECK(text == reference);
  }
  const auto records = load_trajectory_log(dir / "log1.jsonl");
  for (std::size_t i = 0; i < records.size(); ++i) CHECK(records[i].sample_id == samples[i].sample_id);

  // Interrupted run: the first 10 lines survive; resume completes the rest.
  std::istringstream in(reference);
  std::string line, partial;
  for (int i = 0; i < 10 && std::getline(in, line); ++i) partial += line + "\n";
  testing::write_file(dir / "resume.jsonl", partial);
  ScriptedBackend b(testing::oracle_responder());
  EngineConfig c = fast_config();
  c.parallelism = 4;
  const auto summary = run_batch(samples, b, c, dir / "resume.jsonl", true);
  CHECK(summary.skipped == 10);
  CHECK(summary.executed == 14);
  CHECK(b.calls() == 28);
  CHECK(testing::read_file(dir / "resume.jsonl") == reference);

  const auto again = run_batch(samples, b, c, dir / "resume.jsonl", true);
  CHECK(again.executed == 0);
  CHECK(again.skipped == 24);
}

TEST_CASE("failed episodes are logged and do not stop the batch") {
  TempDir dir;
  auto samples = testing::synthetic_samples(dir.path, 5, 4);
  ScriptedBackend b([](const GenerationRequest& req) -> std::string {
    if (testing::question_number(req) == 2) throw BackendUnavailable("down");
    return testing::oracle_responder()(req);
  });
  EngineConfig c = fast_config();
  c.parallelism = 2;
  const auto summary = run_batch(samples, b, c, dir / "log.jsonl", false);
  CHECK(summary.failed == 1);
  const auto records = load_trajectory_log(dir / "log.jsonl");
  REQUIRE(records.size() == 5);
  CHECK(records[2].error.has_value());
  CHECK_FALSE(records[3].error.has_value());
  CHECK(records[3].answer == "word3");
}

TEST_CASE("trajectory records survive JSON") {
  TrajectoryRecord r;
  r.sample_id = "x";
  r.turn1_raw = "raw1";
  r.keyframe_ids = {1, 4};
  r.dropped = {{9, "out-of-range"}};
  r.turn2_raw = "raw2";
  r.answer = "ans";
  r.used_fallback = true;
  r.turn1_attempts = 2;
  r.turn2_attempts = 3;
  r.digests = {"d1", "d2"};
  const auto back = record_from_json(record_to_json(r));
  CHECK(back.sample_id == r.sample_id);
  CHECK(back.keyframe_ids == r.keyframe_ids);
  CHECK(back.dropped == r.dropped);
  CHECK(back.answer == r.answer);
  CHECK(back.used_fallback);
  CHECK(back.turn1_attempts == 2);
  CHECK(back.turn2_attempts == 3);
  CHECK(back.digests == r.digests);
  CHECK_FALSE(back.error.has_value());
}
