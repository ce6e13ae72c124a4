// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "vtagent/grpo.hpp"
#include "vtagent/metrics.hpp"

using namespace vtagent;

namespace {

std::string random_word(std::mt19937_64& rng, std::size_t max_len) {
  static const char alphabet[] = "abcdefghijklmnop ";
  std::string s;
  for (std::size_t i = 0, n = 1 + rng() % max_len; i < n; ++i) s += alphabet[rng() % (sizeof alphabet - 1)];
  return s;
}

const std::vector<AnlsPair>& pairs() {
  static const auto data = [] {
    std::mt19937_64 rng(1);
    std::vector<AnlsPair> out;
    for (int i = 0; i < 20000; ++i)
      out.push_back({random_word(rng, 24), {random_word(rng, 24), random_word(rng, 24)}});
    return out;
  }();
  return data;
}

struct ScoreData {
  std::vector<Sample> samples;
  SampleIndex index;
  std::vector<TrajectoryRecord> records;
};

const ScoreData& score_data() {
  static const ScoreData data = [] {
    ScoreData d;
    std::mt19937_64 rng(2);
    for (int i = 0; i < 20000; ++i) {
      Sample s;
      s.sample_id = "s" + std::to_string(i);
      s.video_id = "v" + std::to_string(i);
      s.question = "q";
      s.gold_answers = {random_word(rng, 20)};
      s.split_tag = i % 3 ? "a" : "b";
      s.pseudo_keyframes = std::vector<int>{i % 8};
      d.samples.push_back(std::move(s));
      TrajectoryRecord r;
      r.sample_id = d.samples.back().sample_id;
      r.answer = random_word(rng, 20);
      r.keyframe_ids = {static_cast<int>(rng() % 8)};
      d.records.push_back(std::move(r));
    }
    d.index = index_samples(d.samples);
    return d;
  }();
  return data;
}

void BM_AnlsBatchSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(anls_batch_serial(pairs()));
}
void BM_AnlsBatchParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(anls_batch(pairs()));
}

void BM_ScoreRecordsSerial(benchmark::State& state) {
  const auto& d = score_data();
  for (auto _ : state) benchmark::DoNotOptimize(score_records_serial(d.records, d.index));
}
void BM_ScoreRecordsParallel(benchmark::State& state) {
  const auto& d = score_data();
  for (auto _ : state) benchmark::DoNotOptimize(score_records(d.records, d.index));
}

template <bool Parallel>
void BM_GrpoStep(benchmark::State& state) {
  const auto suite = grpo::make_env_suite(3, 64, 16, 8, 2.0);
  std::vector<const grpo::ToyEnv*> envs;
  for (const auto& e : suite) envs.push_back(&e);
  grpo::ToyPolicy policy(8, suite[0].feature_dim());
  grpo::StepConfig config;
  config.group_size = 16;
  config.inner_steps = 4;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto stats = Parallel ? grpo::grpo_step(policy, envs, config, seed++)
                          : grpo::grpo_step_serial(policy, envs, config, seed++);
    benchmark::DoNotOptimize(stats);
  }
}

}  // namespace

BENCHMARK(BM_AnlsBatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AnlsBatchParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ScoreRecordsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreRecordsParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GrpoStep<false>)->Name("BM_GrpoStepSerial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GrpoStep<true>)->Name("BM_GrpoStepParallel")->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
