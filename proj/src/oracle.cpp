#include "vtagent/oracle.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "vtagent/error.hpp"
#include "vtagent/parallel.hpp"

namespace fs = std::filesystem;

namespace vtagent {

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string opt2(const std::optional<double>& v) { return v ? fmt2(*v) : ""; }

bool frame_answer_correct(const Sample& sample, int pos, Backend& backend,
                          const EngineConfig& config, bool& failed) {
  const auto messages = build_direct_answer_prompt(sample, {pos}, config);
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    GenerationRequest req;
    req.messages = messages;
    req.max_new_tokens = config.max_new_tokens;
    req.temperature = config.temperature;
    req.seed = derive_seed(config.seed, sample.sample_id, "frame" + std::to_string(pos), attempt);
    std::string raw;
    try {
      raw = complete_with_retry(backend, req, config);
    } catch (const BackendError&) {
      failed = true;
      return false;
    }
    try {
      const Turn t = parse_turn(raw);
      if (const auto* a = std::get_if<Answer>(&t.action))
        return exact_accuracy(a->text, sample.gold_answers) == 1;
    } catch (const GrammarError&) {
    }
  }
  return false;
}

}  // namespace

FramewiseResult framewise_eval(const Sample& sample, Backend& backend, const EngineConfig& config) {
  FramewiseResult r;
  r.sample_id = sample.sample_id;
  const int n = sample.frame_count();
  std::vector<char> correct(static_cast<std::size_t>(n), 0);
  std::vector<char> failed(static_cast<std::size_t>(n), 0);

#pragma omp parallel for schedule(dynamic, 1) num_threads(config.parallelism) if (config.parallelism > 1)
  for (int pos = 0; pos < n; ++pos) {
    bool f = false;
    correct[static_cast<std::size_t>(pos)] = frame_answer_correct(sample, pos, backend, config, f);
    failed[static_cast<std::size_t>(pos)] = f;
  }

  for (int pos = 0; pos < n; ++pos) {
    const bool ok = correct[static_cast<std::size_t>(pos)];
    r.per_frame_correct.push_back(ok);
    r.any_correct = r.any_correct || ok;
    if (failed[static_cast<std::size_t>(pos)]) r.failed_frames.push_back(pos);
  }
  return r;
}

std::vector<int> pseudo_keyframes(const FramewiseResult& result) {
  if (!result.any_correct) throw NotFrameSolvable(result.sample_id);
  std::vector<int> out;
  for (std::size_t i = 0; i < result.per_frame_correct.size(); ++i)
    if (result.per_frame_correct[i]) out.push_back(static_cast<int>(i));
  return out;
}

Partition make_partition(const std::vector<FramewiseResult>& results) {
  Partition p;
  for (const auto& r : results) (r.any_correct ? p.set_s : p.set_u).push_back(r.sample_id);
  return p;
}

OracleReport oracle_upper_bound(const std::vector<FramewiseResult>& results,
                                const std::vector<SampleScore>* video_scores) {
  std::vector<SampleScore> oracle_scores;
  oracle_scores.reserve(results.size());
  for (const auto& r : results) {
    SampleScore s;
    s.sample_id = r.sample_id;
    s.accuracy = r.any_correct ? 1 : 0;
    s.anls = r.any_correct ? 1.0 : 0.0;
    oracle_scores.push_back(std::move(s));
  }
  OracleReport out;
  out.oracle = aggregate(oracle_scores, "oracle");
  out.partition = make_partition(results);
  if (video_scores && !video_scores->empty()) {
    out.video_accuracy = aggregate(*video_scores, "video").mean_accuracy;
    out.gap = out.oracle.mean_accuracy - *out.video_accuracy;
  }
  return out;
}

std::vector<FramewiseResult> run_framewise(const std::vector<Sample>& samples, Backend& backend,
                                           const EngineConfig& config, const fs::path& log_path) {
  validate_config(config);
  EngineConfig per_sample = config;
  per_sample.parallelism = 1;  // parallelism is spent across samples
  JsonlWriter writer(log_path, true);
  std::vector<FramewiseResult> out;
  out.reserve(samples.size());
  for_each_ordered<FramewiseResult>(
      samples.size(), config.parallelism,
      [&](std::size_t i) { return framewise_eval(samples[i], backend, per_sample); },
      [&](std::size_t, FramewiseResult r) {
        writer.append(framewise_to_json(r));
        out.push_back(std::move(r));
      });
  return out;
}

SampleScore holistic_eval(const Sample& sample, Backend& backend, const EngineConfig& config,
                          double anls_threshold) {
  SampleScore s;
  s.sample_id = sample.sample_id;
  s.split_tag = sample.split_tag;
  std::vector<int> all(static_cast<std::size_t>(sample.frame_count()));
  for (int i = 0; i < sample.frame_count(); ++i) all[static_cast<std::size_t>(i)] = i;
  const auto messages = build_direct_answer_prompt(sample, all, config);
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    GenerationRequest req;
    req.messages = messages;
    req.max_new_tokens = config.max_new_tokens;
    req.temperature = config.temperature;
    req.seed = derive_seed(config.seed, sample.sample_id, "video", attempt);
    std::string raw;
    try {
      raw = complete_with_retry(backend, req, config);
    } catch (const BackendError&) {
      s.failed = true;
      return s;
    }
    try {
      const Turn t = parse_turn(raw);
      if (const auto* a = std::get_if<Answer>(&t.action)) {
        s.accuracy = exact_accuracy(a->text, sample.gold_answers);
        s.anls = anls(a->text, sample.gold_answers, anls_threshold);
        return s;
      }
    } catch (const GrammarError&) {
    }
  }
  return s;
}

std::vector<SampleScore> run_holistic(const std::vector<Sample>& samples, Backend& backend,
                                      const EngineConfig& config, const fs::path& log_path,
                                      double anls_threshold) {
  validate_config(config);
  std::vector<SampleScore> out;
  out.reserve(samples.size());
  for_each_ordered<SampleScore>(
      samples.size(), config.parallelism,
      [&](std::size_t i) { return holistic_eval(samples[i], backend, config, anls_threshold); },
      [&](std::size_t, SampleScore s) { out.push_back(std::move(s)); });
  write_score_log(log_path, out, out.empty() ? std::vector<MetricReport>{} : aggregate_by_split(out));
  return out;
}

json framewise_to_json(const FramewiseResult& r) {
  std::vector<int> vec(r.per_frame_correct.begin(), r.per_frame_correct.end());
  json j = {{"sample_id", r.sample_id}, {"vector", vec}, {"any_correct", r.any_correct}};
  if (!r.failed_frames.empty()) j["failed_frames"] = r.failed_frames;
  return j;
}

FramewiseResult framewise_from_json(const json& j) {
  FramewiseResult r;
  r.sample_id = j.at("sample_id").get<std::string>();
  for (const auto& v : j.at("vector")) r.per_frame_correct.push_back(v.get<int>() != 0);
  r.any_correct = j.at("any_correct").get<bool>();
  r.failed_frames = j.value("failed_frames", std::vector<int>{});
  bool any = false;
  for (bool b : r.per_frame_correct) any = any || b;
  if (any != r.any_correct) throw SchemaMismatch("any_correct disagrees with vector");
  return r;
}

std::vector<FramewiseResult> load_framewise_log(const fs::path& path) {
  std::vector<FramewiseResult> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(framewise_from_json(j));
    } catch (const std::exception& e) {
      throw MalformedRecord(line, std::string("framewise record: ") + e.what());
    }
  });
  return out;
}

void write_partition(const Partition& p, const fs::path& dir) {
  fs::create_directories(dir);
  auto write = [](const fs::path& path, const std::vector<std::string>& ids) {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& id : ids) out << id << '\n';
    if (!out) throw Error("cannot write " + path.string());
  };
  write(dir / "set_s.ids", p.set_s);
  write(dir / "set_u.ids", p.set_u);
}

Partition read_partition(const fs::path& dir) {
  auto read = [](const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) ids.push_back(line);
    }
    return ids;
  };
  Partition p{read(dir / "set_s.ids"), read(dir / "set_u.ids")};
  std::set<std::string> s(p.set_s.begin(), p.set_s.end());
  for (const auto& id : p.set_u)
    if (s.count(id)) throw SchemaMismatch("partition sets overlap on " + id);
  return p;
}

std::map<std::string, std::vector<int>> pseudo_keyframe_map(
    const std::vector<FramewiseResult>& results) {
  std::map<std::string, std::vector<int>> out;
  for (const auto& r : results)
    if (r.any_correct) out[r.sample_id] = pseudo_keyframes(r);
  return out;
}

std::vector<StratifiedRow> stratified_report(const std::vector<SystemScores>& systems,
                                             const Partition& partition,
                                             const std::map<std::string, std::vector<int>>& pseudo) {
  std::vector<StratifiedRow> rows;
  const std::pair<const char*, const std::vector<std::string>*> subsets[] = {
      {"Set_s", &partition.set_s}, {"Set_u", &partition.set_u}};
  for (const auto& [name, ids] : subsets) {
    const std::set<std::string> members(ids->begin(), ids->end());
    const bool solvable = ids == &partition.set_s;
    for (const auto& sys : systems) {
      StratifiedRow row;
      row.subset = name;
      row.system = sys.name;
      double correct = 0.0;
      std::size_t hits = 0;
      for (const auto& s : sys.scores) {
        if (!members.count(s.sample_id)) continue;
        ++row.n;
        correct += s.accuracy;
        if (!solvable) continue;
        auto pk = pseudo.find(s.sample_id);
        if (pk == pseudo.end()) continue;
        ++row.hit_n;
        // A fallback selection is not the agent's choice and counts as a miss.
        if (!s.used_fallback && !s.failed && hit(s.keyframe_ids, pk->second)) ++hits;
      }
      if (row.n > 0) row.accuracy = 100.0 * correct / static_cast<double>(row.n);
      if (row.hit_n > 0)
        row.hit_rate = 100.0 * static_cast<double>(hits) / static_cast<double>(row.hit_n);
      if (row.n == 0)
        std::fprintf(stderr, "warning: %s has no samples for system %s\n", name, sys.name.c_str());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_stratified_table(const std::vector<StratifiedRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.system.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s  %-*s  %6s  %7s  %7s\n", "Subset", static_cast<int>(w),
                "System", "N", "ACC.", "Hit");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-6s  %-*s  %6zu  %7s  %7s\n", r.subset.c_str(),
                  static_cast<int>(w), r.system.c_str(), r.n, opt2(r.accuracy).c_str(),
                  opt2(r.hit_rate).c_str());
    os << buf;
  }
  return os.str();
}

std::string format_stratified_csv(const std::vector<StratifiedRow>& rows) {
  std::ostringstream os;
  os << "subset,system,n,accuracy,hit_rate\n";
  for (const auto& r : rows)
    os << r.subset << ',' << r.system << ',' << r.n << ',' << opt2(r.accuracy) << ','
       << opt2(r.hit_rate) << '\n';
  return os.str();
}

std::string format_oracle_table(const OracleReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s  %6s  %7s\n", "Setting", "N", "ACC.");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-18s  %6zu  %7s\n", "frame-wise oracle", report.oracle.n,
                fmt2(report.oracle.mean_accuracy).c_str());
  os << buf;
  if (report.video_accuracy) {
    std::snprintf(buf, sizeof buf, "%-18s  %6zu  %7s\n", "video-level", report.oracle.n,
                  fmt2(*report.video_accuracy).c_str());
    os << buf;
    std::snprintf(buf, sizeof buf, "%-18s  %6s  %+7.2f\n", "oracle - video", "", *report.gap);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "Set_s %zu / Set_u %zu\n", report.partition.set_s.size(),
                report.partition.set_u.size());
  os << buf;
  return os.str();
}

}  // namespace vtagent
