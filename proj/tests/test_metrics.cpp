#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vtagent/error.hpp"
#include "vtagent/metrics.hpp"

using namespace vtagent;
using testing::TempDir;

namespace {

std::u32string random_word(std::mt19937_64& rng, std::size_t max_len) {
  static const std::u32string alphabet = U"abcéα";
  std::u32string s;
  const std::size_t len = rng() % (max_len + 1);
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
  return s;
}

TrajectoryRecord record(const std::string& id, const std::string& answer, std::vector<int> kf,
                        bool fallback = false) {
  TrajectoryRecord r;
  r.sample_id = id;
  r.answer = answer;
  r.keyframe_ids = std::move(kf);
  r.used_fallback = fallback;
  return r;
}

}  // namespace

TEST_CASE("normalization") {
  CHECK(normalize_answer("  Hello   World. ") == "hello world");
  CHECK(normalize_answer("A.B.") == "a.b");
  CHECK(normalize_answer("end..") == "end.");
  CHECK(normalize_answer("CAFÉ ΣΟΦΙΑ　МОСКВА") == "café σοφια москва");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer(" . ") == "");
  // Idempotent.
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    std::string s;
    for (int i = 0; i < 10; ++i) s += " .AbÉé\t"[rng() % 7];
    const auto once = normalize_answer(s);
    if (!once.empty() && once.back() == '.') continue;  // a second period is stripped again
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("exact accuracy takes any gold") {
  CHECK(exact_accuracy("Blue Moon", {"red", "blue  moon."}) == 1);
  CHECK(exact_accuracy("Blue Moo", {"blue moon"}) == 0);
  CHECK(exact_accuracy("", {""}) == 1);
}

TEST_CASE("levenshtein agrees with the edit-script enumerator") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 400; ++t) {
    const auto a = random_word(rng, 6);
    const auto b = random_word(rng, 6);
    CHECK(levenshtein(a, b) == oracle::edit_distance(a, b));
  }
  CHECK(levenshtein(std::string_view("kitten"), std::string_view("sitting")) == 3);
  CHECK(levenshtein(std::string_view("é"), std::string_view("e")) == 1);  // one code point
}

TEST_CASE("edit distance is a metric") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 300; ++t) {
    const auto a = random_word(rng, 8);
    const auto b = random_word(rng, 8);
    const auto c = random_word(rng, 8);
    CHECK(levenshtein(a, a) == 0);
    CHECK(levenshtein(a, b) == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c));
    CHECK(levenshtein(a, b) <= std::max(a.size(), b.size()));
    CHECK(levenshtein(a, b) >= (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()));
    if (a != b) CHECK(levenshtein(a, b) > 0);
  }
}

TEST_CASE("ANLS values") {
  CHECK(anls("helo", {"hello"}) == doctest::Approx(0.8));
  CHECK(anls("xyz", {"hello"}) == 0.0);
  CHECK(anls("", {""}) == 1.0);
  CHECK(anls("", {"abc"}) == 0.0);
  CHECK(anls("Hello.", {"HELLO"}) == 1.0);
  CHECK(anls("abcd", {"zzzz", "abcf"}) == doctest::Approx(0.75));
  // Exactly at the threshold survives, just below is zeroed.
  CHECK(anls("ab", {"abcd"}) == doctest::Approx(0.5));
  CHECK(anls("ab", {"abcde"}) == 0.0);
  CHECK(anls("ab", {"abcde"}, 0.3) == doctest::Approx(0.4));

  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    const auto p = utf8_encode(random_word(rng, 7));
    const auto g = utf8_encode(random_word(rng, 7));
    const double v = anls(p, {g});
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK((v == 0.0 || v >= 0.5));
    CHECK(v == anls(g, {p}));
    if (exact_accuracy(p, {g})) CHECK(v == 1.0);
  }
}

TEST_CASE("judge accepts exact or near matches") {
  CHECK(judge_answer("hello", {"hello"}));
  CHECK(judge_answer("helo", {"hello"}));
  CHECK_FALSE(judge_answer("xyz", {"hello"}));
}

TEST_CASE("hit is intersection") {
  CHECK(hit(std::vector<int>{2}, std::vector<int>{2}));
  CHECK(hit(std::vector<int>{1, 5}, std::vector<int>{5, 7}));
  CHECK_FALSE(hit(std::vector<int>{1, 5}, std::vector<int>{2}));
  CHECK_FALSE(hit(std::vector<int>{}, std::vector<int>{2}));
}

TEST_CASE("per-sample scores and split aggregation") {
  TempDir dir;
  auto samples = testing::synthetic_samples(dir.path, 4, 6, true);  // pseudo {i % 6}
  const SampleIndex idx = index_samples(samples);
  const std::vector<TrajectoryRecord> recs = {record("s0", "word0", {0}), record("s1", "wrd1", {3}),
                                              record("s2", "nothing", {2}, true),
                                              record("s3", "WORD3.", {})};
  const auto scores = score_records(recs, idx);
  CHECK(scores == score_records_serial(recs, idx));
  CHECK(scores[0].accuracy == 1);
  CHECK(*scores[0].hit);
  CHECK(scores[1].accuracy == 0);
  CHECK(scores[1].anls == doctest::Approx(0.8));
  CHECK_FALSE(*scores[1].hit);
  CHECK_FALSE(scores[2].hit.has_value());  // fallback selection
  CHECK(scores[3].accuracy == 1);
  CHECK_FALSE(scores[3].hit.has_value());  // nothing selected

  const auto reports = aggregate_by_split(scores);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].split_tag == "even");
  CHECK(reports[0].mean_accuracy == doctest::Approx(50.0));
  CHECK(reports[1].split_tag == "odd");
  CHECK(reports[1].mean_accuracy == doctest::Approx(50.0));
  CHECK(reports[1].mean_anls == doctest::Approx(90.0));
  CHECK(reports[2].split_tag == "all");
  CHECK(reports[2].n == 4);
  CHECK(reports[2].mean_accuracy == doctest::Approx(50.0));
  CHECK(reports[2].mean_anls == doctest::Approx((100 + 80 + 0 + 100) / 4.0));
  CHECK(*reports[2].hit_rate == doctest::Approx(50.0));
  CHECK(reports[2].hit_n == 2);

  CHECK_THROWS_AS(aggregate({}), EmptyScoreSet);
  CHECK_THROWS_AS(score_records({record("ghost", "x", {})}, idx), SchemaMismatch);
}

TEST_CASE("parallel kernels match the serial references") {
  std::mt19937_64 rng(17);
  std::vector<AnlsPair> pairs;
  for (int i = 0; i < 5000; ++i)
    pairs.push_back({utf8_encode(random_word(rng, 9)),
                     {utf8_encode(random_word(rng, 9)), utf8_encode(random_word(rng, 9))}});
  CHECK(anls_batch(pairs) == anls_batch_serial(pairs));
}

TEST_CASE("score log round-trips and tables format to two decimals") {
  TempDir dir;
  std::vector<SampleScore> scores(3);
  for (int i = 0; i < 3; ++i) {
    scores[static_cast<std::size_t>(i)].sample_id = "s" + std::to_string(i);
    scores[static_cast<std::size_t>(i)].split_tag = "val";
    scores[static_cast<std::size_t>(i)].accuracy = i == 0;
    scores[static_cast<std::size_t>(i)].anls = i == 0 ? 1.0 : 0.6;
  }
  scores[0].hit = true;
  scores[1].keyframe_ids = {1, 2};
  const auto reports = aggregate_by_split(scores);
  write_score_log(dir / "scores.jsonl", scores, reports);
  CHECK(load_score_log(dir / "scores.jsonl") == scores);

  const auto table = format_report_table(reports);
  CHECK(table.find("ACC.") != std::string::npos);
  CHECK(table.find("ANLS") != std::string::npos);
  CHECK(table.find("33.33") != std::string::npos);
  CHECK(table.find("73.33") != std::string::npos);
  CHECK(format_report_csv(reports).find("val,3,33.33,73.33,100.00") != std::string::npos);

  testing::write_file(dir / "bad.jsonl", "{\"sample_id\":\"a\",\"accuracy\":1,\"anls\":1}\n{\"sample_id\":\"b\"}\n");
  try {
    load_score_log(dir / "bad.jsonl");
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.line_no == 2);
  }
}
