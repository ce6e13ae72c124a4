#include "vtagent/curation.hpp"

#include <unordered_set>

#include "vtagent/error.hpp"
#include "vtagent/jsonl.hpp"
#include "vtagent/metrics.hpp"
#include "vtagent/parallel.hpp"

namespace fs = std::filesystem;

namespace vtagent {

namespace {

Judge effective_judge(const CurationOptions& opts) {
  if (opts.judge) return opts.judge;
  return [](std::string_view pred, const std::vector<std::string>& golds) {
    return judge_answer(pred, golds);
  };
}

std::string anchor_prompt_text(const Sample& sample, const EngineConfig& config) {
  const auto messages = build_anchor_prompt(sample, config);
  std::string text;
  for (const auto& p : messages.front().parts)
    if (const auto* t = std::get_if<TextPart>(&p)) {
      text = t->text;
      break;
    }
  return text;
}

struct Outcome {
  json progress;
  std::optional<json> output;
};

// Reads a progress log into the set of finished ids.
std::unordered_set<std::string> read_progress(const fs::path& path,
                                              const std::function<void(const json&)>& visit) {
  std::unordered_set<std::string> done;
  if (!fs::exists(path)) return done;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    if (!j.is_object() || !j.contains("sample_id"))
      throw MalformedRecord(line, "progress record needs sample_id");
    done.insert(j["sample_id"].get<std::string>());
    visit(j);
  });
  return done;
}

CurationSummary run_pipeline(const std::vector<Sample>& samples, const EngineConfig& config,
                             const CurationOptions& opts, const fs::path& corpus_path,
                             const fs::path& progress_path,
                             const std::function<Outcome(const Sample&)>& process,
                             const std::function<void(const json&, CurationSummary&)>& tally) {
  validate_config(config);
  if (opts.max_attempts < 1) throw ConfigError("curation attempts must be >= 1");
  CurationSummary summary;
  summary.inputs = samples.size();

  std::unordered_set<std::string> done;
  if (opts.resume) done = read_progress(progress_path, [&](const json& j) { tally(j, summary); });

  std::vector<const Sample*> pending;
  for (const auto& s : samples) {
    if (done.count(s.sample_id)) ++summary.skipped;
    else pending.push_back(&s);
  }

  JsonlWriter corpus(corpus_path, !opts.resume);
  JsonlWriter progress(progress_path, !opts.resume);
  for_each_ordered<Outcome>(
      pending.size(), config.parallelism, [&](std::size_t i) { return process(*pending[i]); },
      [&](std::size_t, Outcome out) {
        // Corpus before progress: an interrupted pair re-runs the sample on
        // resume rather than dropping a kept record.
        if (out.output) corpus.append(*out.output);
        progress.append(out.progress);
        ++summary.processed;
        tally(out.progress, summary);
      });
  return summary;
}

}  // namespace

void check_sft_target(const std::string& target, const std::vector<std::string>& golds,
                      const Judge& judge) {
  // Turn 1 ends with a canonical select payload, so its closing tag is the
  // first "</action>" in the target.
  constexpr std::string_view kClose = "</action>\n";
  const auto close = target.find(kClose);
  if (close == std::string::npos) throw SchemaMismatch("SFT target lacks a second turn");
  const auto split = close + kClose.size() - 1;
  Turn t1, t2;
  try {
    t1 = parse_turn(std::string_view(target).substr(0, split));
    t2 = parse_turn(std::string_view(target).substr(split + 1));
  } catch (const GrammarError& e) {
    throw SchemaMismatch(std::string("SFT target does not parse: ") + e.what());
  }
  if (!is_select(t1.action)) throw SchemaMismatch("SFT turn 1 is not a keyframe selection");
  const auto* ans = std::get_if<Answer>(&t2.action);
  if (!ans) throw SchemaMismatch("SFT turn 2 is not an answer");
  if (!judge(ans->text, golds)) throw SchemaMismatch("SFT answer fails the judge");
}

json sft_to_json(const SftRecord& r, const Sample& sample) {
  json frames = json::array();
  for (const auto& f : sample.frames) frames.push_back({{"index", f.index}, {"path", f.source_path}});
  return {{"sample_id", r.sample_id}, {"frames", std::move(frames)},
          {"question", sample.question}, {"prompt", r.prompt},
          {"target", r.target},       {"teacher", r.teacher_id},
          {"attempts", r.attempts}};
}

json rl_to_json(const RlRecord& r) {
  return {{"sample_id", r.sample_id},
          {"correct_count", r.correct_count},
          {"outcomes", r.outcomes},
          {"answers", r.attempt_answers}};
}

std::optional<SftRecord> curate_sft_sample(const Sample& sample, Backend& teacher,
                                           const EngineConfig& config, const CurationOptions& opts,
                                           int& attempts_used) {
  const Judge judge = effective_judge(opts);
  attempts_used = 0;
  for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
    attempts_used = attempt;
    Trajectory traj = run_episode(sample, teacher, config, attempt);
    if (traj.used_fallback || !traj.turn1 || !is_select(traj.turn1->action)) continue;
    if (!judge(traj.answer(), sample.gold_answers)) continue;

    SftRecord rec;
    rec.sample_id = sample.sample_id;
    rec.prompt = anchor_prompt_text(sample, config);
    rec.target = render_turn(*traj.turn1) + "\n" + render_turn(traj.turn2);
    rec.teacher_id = teacher.id();
    rec.attempts = attempt;
    check_sft_target(rec.target, sample.gold_answers, judge);
    return rec;
  }
  return std::nullopt;
}

RlRecord evaluate_rl_sample(const Sample& sample, Backend& model, const EngineConfig& config,
                            const CurationOptions& opts) {
  const Judge judge = effective_judge(opts);
  RlRecord rec;
  rec.sample_id = sample.sample_id;
  for (int attempt = 1; attempt <= opts.max_attempts; ++attempt) {
    Trajectory traj = run_episode(sample, model, config, attempt);
    const std::string& answer = traj.answer();
    const int ok = !answer.empty() && judge(answer, sample.gold_answers) ? 1 : 0;
    rec.attempt_answers.push_back(answer);
    rec.outcomes.push_back(ok);
    rec.correct_count += ok;
  }
  return rec;
}

CurationSummary generate_sft_corpus(const std::vector<Sample>& samples, Backend& teacher,
                                    const EngineConfig& config, const CurationOptions& opts,
                                    const fs::path& out_dir) {
  auto process = [&](const Sample& s) {
    Outcome out;
    int attempts = 0;
    try {
      auto rec = curate_sft_sample(s, teacher, config, opts, attempts);
      out.progress = {{"sample_id", s.sample_id}, {"kept", rec.has_value()}, {"attempts", attempts}};
      if (rec) out.output = sft_to_json(*rec, s);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      out.progress = {{"sample_id", s.sample_id}, {"kept", false}, {"attempts", attempts},
                      {"error", e.what()}};
    }
    return out;
  };
  auto tally = [](const json& p, CurationSummary& sum) {
    if (p.value("kept", false)) ++sum.kept;
    else ++sum.dropped;
  };
  return run_pipeline(samples, config, opts, out_dir / "sft_corpus.jsonl",
                      out_dir / "sft_progress.jsonl", process, tally);
}

CurationSummary filter_rl_corpus(const std::vector<Sample>& samples, Backend& model,
                                 const EngineConfig& config, const CurationOptions& opts,
                                 const fs::path& out_dir) {
  auto process = [&](const Sample& s) {
    Outcome out;
    try {
      RlRecord rec = evaluate_rl_sample(s, model, config, opts);
      const bool keep = retain_for_rl(rec.correct_count, opts.max_attempts);
      out.progress = rl_to_json(rec);
      out.progress["kept"] = keep;
      if (keep) out.output = rl_to_json(rec);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      out.progress = {{"sample_id", s.sample_id}, {"kept", false}, {"error", e.what()}};
    }
    return out;
  };
  auto tally = [](const json& p, CurationSummary& sum) {
    if (p.value("kept", false)) ++sum.kept;
    else ++sum.dropped;
    if (!p.contains("error") && p.contains("correct_count"))
      ++sum.correct_histogram[p["correct_count"].get<int>()];
  };
  return run_pipeline(samples, config, opts, out_dir / "rl_corpus.jsonl",
                      out_dir / "rl_progress.jsonl", process, tally);
}

}  // namespace vtagent
