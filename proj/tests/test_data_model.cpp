#include <doctest.h>

#include <set>

#include "support.hpp"
#include "vtagent/data_model.hpp"
#include "vtagent/error.hpp"

using namespace vtagent;
using testing::TempDir;

namespace {

std::string frame_line(const std::string& id, const std::string& frames_json,
                       const std::string& extra = "") {
  return R"({"sample_id":")" + id + R"(","video_id":"v","question":"q?","answers":["a"],"frames":)" +
         frames_json + extra + "}\n";
}

}  // namespace

TEST_CASE("manifest round-trips through write and load") {
  TempDir dir;
  DatasetManifest m;
  m.samples = testing::synthetic_samples(dir.path, 3, 5, true);
  write_manifest(m, dir / "m.jsonl");
  const auto loaded = load_manifest(dir / "m.jsonl");
  CHECK(loaded.samples == m.samples);
}

TEST_CASE("relative frame paths resolve against the manifest directory or frames_root") {
  TempDir dir;
  testing::write_file(dir / "clips/a/0.jpg", "x");
  testing::write_file(dir / "clips/a/1.jpg", "y");
  testing::write_file(dir / "m.jsonl",
                      frame_line("s0", R"([{"index":0,"path":"clips/a/0.jpg"},{"index":1,"path":"clips/a/1.jpg"}])"));
  const auto m = load_manifest(dir / "m.jsonl");
  CHECK(m.samples[0].frames[1].source_path == (dir.path / "clips/a/1.jpg").lexically_normal().string());

  testing::write_file(dir / "other/m.jsonl",
                      frame_line("s0", R"([{"index":0,"path":"a/0.jpg"},{"index":1,"path":"a/1.jpg"}])"));
  LoadOptions opts;
  opts.frames_root = dir / "clips";
  CHECK(load_manifest(dir / "other/m.jsonl", opts).samples[0].frames.size() == 2);
}

TEST_CASE("malformed records name the offending line") {
  TempDir dir;
  testing::make_frames(dir.path, "v", 2);
  const std::string ok = R"([{"index":0,"path":"v/f0.png"},{"index":1,"path":"v/f1.png"}])";

  auto expect_line = [&](const std::string& body, std::size_t line, const std::string& reason) {
    testing::write_file(dir / "m.jsonl", body);
    try {
      load_manifest(dir / "m.jsonl");
      FAIL("expected MalformedRecord");
    } catch (const MalformedRecord& e) {
      CHECK(e.line_no == line);
      CHECK(e.reason.find(reason) != std::string::npos);
    }
  };
  expect_line(frame_line("a", ok) + "{not json\n", 2, "invalid JSON");
  expect_line(frame_line("a", "[]"), 1, "empty frames");
  expect_line(frame_line("a", ok) + "\n" + frame_line("b", ok, R"(,"keyframes":[5])"), 3,
              "keyframe out of range");
  expect_line(frame_line("a", R"([{"index":1,"path":"v/f0.png"}])"), 1, "frame indices");
  expect_line(frame_line("a", R"([{"index":0,"path":"v/f0.png","t":2.0},{"index":1,"path":"v/f1.png","t":1.0}])"),
              1, "timestamps decrease");
  expect_line(R"({"sample_id":"a","video_id":"v","answers":["x"],"frames":[]})" "\n", 1,
              "missing field question");
  expect_line(R"({"sample_id":"a","video_id":"v","question":"q","answers":[],"frames":)" + ok + "}\n", 1,
              "empty answers");
}

TEST_CASE("duplicate ids and missing frame files are rejected") {
  TempDir dir;
  testing::make_frames(dir.path, "v", 1);
  const std::string f = R"([{"index":0,"path":"v/f0.png"}])";
  testing::write_file(dir / "m.jsonl", frame_line("a", f) + frame_line("a", f));
  CHECK_THROWS_AS(load_manifest(dir / "m.jsonl"), DuplicateSampleId);

  testing::write_file(dir / "m.jsonl", frame_line("a", R"([{"index":0,"path":"v/nope.png"}])"));
  CHECK_THROWS_AS(load_manifest(dir / "m.jsonl"), MissingFrameFile);
  LoadOptions lax;
  lax.verify_files = false;
  CHECK(load_manifest(dir / "m.jsonl", lax).samples.size() == 1);
}

TEST_CASE("uniform positions follow the floor-spacing rule") {
  CHECK(uniform_positions(10, 4) == std::vector<int>{0, 3, 6, 9});
  CHECK(uniform_positions(5, 5) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(uniform_positions(5, 9) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(uniform_positions(7, 1) == std::vector<int>{0});
  CHECK(uniform_positions(0, 3).empty());

  // Property: strictly increasing, endpoints kept, exact count.
  for (int count = 2; count <= 60; ++count)
    for (int n = 2; n <= count; ++n) {
      const auto p = uniform_positions(count, n);
      REQUIRE(p.size() == static_cast<std::size_t>(n));
      CHECK(p.front() == 0);
      CHECK(p.back() == count - 1);
      for (std::size_t k = 1; k < p.size(); ++k) CHECK(p[k] > p[k - 1]);
      for (int k = 0; k < n; ++k) CHECK(p[static_cast<std::size_t>(k)] == k * (count - 1) / (n - 1));
    }
}

TEST_CASE("sampling remaps pseudo keyframes and records original indices") {
  TempDir dir;
  Sample s = testing::synthetic_samples(dir.path, 1, 10)[0];
  s.pseudo_keyframes = std::vector<int>{3, 4, 9};
  const Sample out = sample_frames(s, SamplingPolicy::uniform(4));  // keeps 0,3,6,9
  REQUIRE(out.frames.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(out.frames[static_cast<std::size_t>(i)].index == i);
  CHECK(out.original_indices == std::vector<int>{0, 3, 6, 9});
  CHECK(out.frames[1].source_path == s.frames[3].source_path);
  CHECK(*out.pseudo_keyframes == std::vector<int>{1, 3});
  CHECK_NOTHROW(check_sample(out));

  // Composition keeps indices pointing at the very first frame list.
  const Sample twice = sample_frames(out, SamplingPolicy::uniform(2));
  CHECK(twice.original_indices == std::vector<int>{0, 9});
  CHECK(sample_frames(s, SamplingPolicy::all()) == s);
}

TEST_CASE("dedupe keys on video, folded question and answer set") {
  TempDir dir;
  auto samples = testing::synthetic_samples(dir.path, 2, 2);
  Sample dup = samples[0];
  dup.sample_id = "dup";
  dup.question = "  WHAT is written on the SIGN   in clip 0? ";
  Sample other_video = dup;
  other_video.sample_id = "other";
  other_video.video_id = "elsewhere";
  samples.push_back(dup);
  samples.push_back(other_video);
  const auto kept = dedupe_samples(samples);
  std::set<std::string> ids;
  for (const auto& s : kept) ids.insert(s.sample_id);
  CHECK(ids == std::set<std::string>{"s0", "s1", "other"});
  CHECK(dedupe_question_key("  A\tb  C ") == "a b c");
}
