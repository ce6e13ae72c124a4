#include <doctest.h>

#include "support.hpp"
#include "vtagent/curation.hpp"
#include "vtagent/error.hpp"
#include "vtagent/jsonl.hpp"
#include "vtagent/metrics.hpp"

using namespace vtagent;
using testing::TempDir;

namespace {

EngineConfig fast_config(int parallelism = 4) {
  EngineConfig c;
  c.backoff_base_ms = 0;
  c.parallelism = parallelism;
  return c;
}

// Which curation attempt a turn-2 request belongs to, recovered from its seed.
int attempt_of(const GenerationRequest& req, const EngineConfig& c, const std::string& sample_id) {
  for (int a = 1; a <= 5; ++a)
    if (req.seed == derive_seed(c.seed, sample_id, "s" + std::to_string(a) + ":answer", 1)) return a;
  return -1;
}

// Clip i answers correctly on attempt a iff bit (a-1) of i is set.
ScriptedBackend::Responder pattern_responder(const EngineConfig& c) {
  return [c](const GenerationRequest& req) {
    const int q = testing::question_number(req);
    if (!testing::asks_for_answer(req)) return testing::select_turn({0});
    const int a = attempt_of(req, c, "s" + std::to_string(q));
    const bool ok = a > 0 && ((q >> (a - 1)) & 1);
    return testing::answer_turn(ok ? testing::gold_for(q) : "zzzzzzzzzz");
  };
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  for_each_jsonl(p, [&](std::size_t, const json& j) { out.push_back(j); });
  return out;
}

}  // namespace

TEST_CASE("retention predicate") {
  for (int n = 1; n <= 6; ++n)
    for (int c = 0; c <= n; ++c) CHECK(retain_for_rl(c, n) == (c != 0 && c != n));
}

TEST_CASE("RL filtering over all 32 outcome patterns") {
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 32, 4);
  const EngineConfig config = fast_config();
  ScriptedBackend model(pattern_responder(config));
  const auto sum = filter_rl_corpus(samples, model, config, {}, dir.path);

  CHECK(sum.inputs == 32);
  CHECK(sum.kept == 30);
  CHECK(sum.dropped == 2);
  const std::size_t binom[] = {1, 5, 10, 10, 5, 1};
  for (int k = 0; k <= 5; ++k) CHECK(sum.correct_histogram.at(k) == binom[k]);

  const auto corpus = read_jsonl(dir / "rl_corpus.jsonl");
  REQUIRE(corpus.size() == 30);
  for (const auto& rec : corpus) {
    const int q = std::stoi(rec["sample_id"].get<std::string>().substr(1));
    CHECK(q != 0);
    CHECK(q != 31);
    const auto outcomes = rec["outcomes"].get<std::vector<int>>();
    for (int a = 0; a < 5; ++a) CHECK(outcomes[static_cast<std::size_t>(a)] == ((q >> a) & 1));
    CHECK(rec["correct_count"] == __builtin_popcount(static_cast<unsigned>(q)));
  }
}

TEST_CASE("empty or malformed answers count as incorrect") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 4)[0];
  int n = 0;
  ScriptedBackend model([&](const GenerationRequest& req) {
    if (!testing::asks_for_answer(req)) return testing::select_turn({1});
    return ++n == 1 ? testing::answer_turn("word0") : std::string("<action>answer:</action>");
  });
  CurationOptions opts;
  const auto rec = evaluate_rl_sample(s, model, fast_config(1), opts);
  CHECK(rec.outcomes == std::vector<int>{1, 0, 0, 0, 0});
  CHECK(rec.correct_count == 1);
}

TEST_CASE("SFT keeps the first judged-correct trajectory") {
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 4, 6);
  const EngineConfig config = fast_config();
  // Clip 0 never succeeds, clip q succeeds from attempt q on.
  ScriptedBackend teacher([config](const GenerationRequest& req) {
    const int q = testing::question_number(req);
    if (!testing::asks_for_answer(req)) return testing::select_turn({2, 3});
    const int a = attempt_of(req, config, "s" + std::to_string(q));
    return testing::answer_turn(q > 0 && a >= q ? testing::gold_for(q) : "no idea at all");
  });
  const auto sum = generate_sft_corpus(samples, teacher, config, {}, dir.path);
  CHECK(sum.kept == 3);
  CHECK(sum.dropped == 1);

  const auto corpus = read_jsonl(dir / "sft_corpus.jsonl");
  REQUIRE(corpus.size() == 3);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& rec = corpus[i];
    CHECK(rec["sample_id"] == "s" + std::to_string(i + 1));
    CHECK(rec["attempts"] == static_cast<int>(i + 1));
    CHECK(rec["teacher"] == "scripted");
    CHECK(rec["frames"].size() == 6);
    CHECK_NOTHROW(check_sft_target(rec["target"].get<std::string>(), samples[i + 1].gold_answers,
                                   [](std::string_view p, const std::vector<std::string>& g) {
                                     return judge_answer(p, g);
                                   }));
    CHECK(rec["target"].get<std::string>().find("select key frame: [2, 3]") != std::string::npos);
  }
}

TEST_CASE("SFT rejects fallback trajectories even when the answer is right") {
  TempDir dir;
  const auto s = testing::synthetic_samples(dir.path, 1, 4)[0];
  ScriptedBackend teacher([](const GenerationRequest& req) {
    return testing::asks_for_answer(req) ? testing::answer_turn("word0") : std::string("nonsense");
  });
  int used = 0;
  CHECK_FALSE(curate_sft_sample(s, teacher, fast_config(1), {}, used).has_value());
  CHECK(used == 5);
}

TEST_CASE("SFT target checks") {
  const auto judge = [](std::string_view p, const std::vector<std::string>& g) {
    return exact_accuracy(p, g) == 1;
  };
  const std::string good = testing::select_turn({1}) + "\n" + testing::answer_turn("x");
  CHECK_NOTHROW(check_sft_target(good, {"x"}, judge));
  CHECK_THROWS_AS(check_sft_target(good, {"y"}, judge), SchemaMismatch);
  CHECK_THROWS_AS(check_sft_target(testing::answer_turn("x"), {"x"}, judge), SchemaMismatch);
  const std::string swapped = testing::answer_turn("x") + "\n" + testing::select_turn({1});
  CHECK_THROWS_AS(check_sft_target(swapped, {"x"}, judge), SchemaMismatch);
}

TEST_CASE("curation resume is idempotent") {
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 32, 4);
  const EngineConfig config = fast_config();
  ScriptedBackend full(pattern_responder(config));
  filter_rl_corpus(samples, full, config, {}, dir / "full");
  const auto reference_corpus = testing::read_file(dir / "full/rl_corpus.jsonl");

  // Interrupted after 12 samples: keep that prefix of both files.
  ScriptedBackend first(pattern_responder(config));
  std::vector<Sample> prefix(samples.begin(), samples.begin() + 12);
  filter_rl_corpus(prefix, first, config, {}, dir / "resumed");

  CurationOptions opts;
  opts.resume = true;
  ScriptedBackend second(pattern_responder(config));
  const auto sum = filter_rl_corpus(samples, second, config, opts, dir / "resumed");
  CHECK(sum.skipped == 12);
  CHECK(sum.processed == 20);
  CHECK(sum.kept == 30);
  CHECK(sum.correct_histogram.at(0) == 1);
  CHECK(testing::read_file(dir / "resumed/rl_corpus.jsonl") == reference_corpus);

  ScriptedBackend third(pattern_responder(config));
  const auto again = filter_rl_corpus(samples, third, config, opts, dir / "resumed");
  CHECK(again.processed == 0);
  CHECK(third.calls() == 0);
  CHECK(again.kept == 30);
}

TEST_CASE("curation output does not depend on parallelism") {
  TempDir dir;
  const auto samples = testing::synthetic_samples(dir.path, 32, 4);
  std::string reference;
  for (int par : {1, 6}) {
    const EngineConfig config = fast_config(par);
    ScriptedBackend model(pattern_responder(config));
    const auto out = dir / ("p" + std::to_string(par));
    filter_rl_corpus(samples, model, config, {}, out);
    const auto text = testing::read_file(out / "rl_corpus.jsonl") +
                      testing::read_file(out / "rl_progress.jsonl");
    if (reference.empty()) reference = text;
    CHECK(text == reference);
  }
}
