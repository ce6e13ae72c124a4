#include "vtagent/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "vtagent/error.hpp"

namespace vtagent {

namespace {

char32_t to_lower(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0x80) return c;
  // Latin-1 supplement, except the multiplication sign.
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  // Greek capitals (no final-sigma handling).
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
  // Cyrillic.
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

bool is_space(char32_t c) {
  return c == U' ' || (c >= U'\t' && c <= U'\r') || c == 0xA0 || c == 0x3000;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) { cp = b0; len = 1; }
    else if ((b0 & 0xE0) == 0xC0) { cp = b0 & 0x1F; len = 2; }
    else if ((b0 & 0xF0) == 0xE0) { cp = b0 & 0x0F; len = 3; }
    else if ((b0 & 0xF8) == 0xF0) { cp = b0 & 0x07; len = 4; }
    else { out.push_back(0xFFFD); ++i; continue; }

    bool ok = i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range values.
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

std::string utf8_encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t c : utf8_decode(text)) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(to_lower(c));
  }
  if (!out.empty() && out.back() == U'.') {
    out.pop_back();
    while (!out.empty() && out.back() == U' ') out.pop_back();
  }
  return utf8_encode(out);
}

int exact_accuracy(std::string_view pred, const std::vector<std::string>& golds) {
  const std::string p = normalize_answer(pred);
  for (const auto& g : golds)
    if (normalize_answer(g) == p) return 1;
  return 0;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] != b[j - 1]);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_decode(a), utf8_decode(b));
}

double normalized_similarity(std::string_view a, std::string_view b) {
  const auto ua = utf8_decode(a);
  const auto ub = utf8_decode(b);
  const std::size_t longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(ua, ub)) / static_cast<double>(longest);
}

double anls(std::string_view pred, const std::vector<std::string>& golds, double threshold) {
  const std::string p = normalize_answer(pred);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, normalized_similarity(p, normalize_answer(g)));
  return best >= threshold ? best : 0.0;
}

bool judge_answer(std::string_view pred, const std::vector<std::string>& golds) {
  return exact_accuracy(pred, golds) == 1 || anls(pred, golds, 0.5) >= 0.5;
}

bool hit(const std::vector<int>& selected, const std::vector<int>& annotated) {
  for (int id : selected)
    if (std::find(annotated.begin(), annotated.end(), id) != annotated.end()) return true;
  return false;
}

// ---- aggregation -------------------------------------------------------------

MetricReport aggregate(const std::vector<SampleScore>& scores, std::string split_tag) {
  if (scores.empty()) throw EmptyScoreSet();
  MetricReport r;
  r.split_tag = std::move(split_tag);
  r.n = scores.size();
  double acc = 0.0, an = 0.0;
  std::size_t hits = 0;
  for (const auto& s : scores) {
    acc += s.accuracy;
    an += s.anls;
    if (s.hit) {
      ++r.hit_n;
      hits += *s.hit;
    }
    r.failed += s.failed;
  }
  r.mean_accuracy = 100.0 * acc / static_cast<double>(r.n);
  r.mean_anls = 100.0 * an / static_cast<double>(r.n);
  if (r.hit_n > 0) r.hit_rate = 100.0 * static_cast<double>(hits) / static_cast<double>(r.hit_n);
  return r;
}

std::vector<MetricReport> aggregate_by_split(const std::vector<SampleScore>& scores) {
  std::map<std::string, std::vector<SampleScore>> by_split;
  for (const auto& s : scores) by_split[s.split_tag].push_back(s);
  std::vector<MetricReport> out;
  if (by_split.size() > 1 || (by_split.size() == 1 && !by_split.begin()->first.empty())) {
    for (const auto& [tag, group] : by_split) out.push_back(aggregate(group, tag.empty() ? "-" : tag));
  }
  out.push_back(aggregate(scores, "all"));
  return out;
}

SampleScore score_record(const TrajectoryRecord& record, const Sample& sample,
                         double anls_threshold) {
  SampleScore s;
  s.sample_id = record.sample_id;
  s.split_tag = sample.split_tag;
  s.keyframe_ids = record.keyframe_ids;
  s.used_fallback = record.used_fallback;
  s.failed = record.error.has_value();
  if (!s.failed) {
    s.accuracy = exact_accuracy(record.answer, sample.gold_answers);
    s.anls = anls(record.answer, sample.gold_answers, anls_threshold);
  }
  if (sample.pseudo_keyframes && !sample.pseudo_keyframes->empty() && !record.used_fallback &&
      !record.keyframe_ids.empty())
    s.hit = hit(record.keyframe_ids, *sample.pseudo_keyframes);
  return s;
}

SampleIndex index_samples(const std::vector<Sample>& samples) {
  SampleIndex idx;
  for (const auto& s : samples) idx.emplace(s.sample_id, &s);
  return idx;
}

namespace {
const Sample& sample_for(const SampleIndex& samples, const std::string& id) {
  auto it = samples.find(id);
  if (it == samples.end()) throw SchemaMismatch("log references unknown sample_id: " + id);
  return *it->second;
}
}  // namespace

std::vector<SampleScore> score_records(const std::vector<TrajectoryRecord>& records,
                                       const SampleIndex& samples, double anls_threshold) {
  // Resolve ids serially so lookup errors surface before the parallel region.
  std::vector<const Sample*> resolved(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    resolved[i] = &sample_for(samples, records[i].sample_id);

  std::vector<SampleScore> out(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        score_record(records[static_cast<std::size_t>(i)], *resolved[static_cast<std::size_t>(i)],
                     anls_threshold);
  return out;
}

std::vector<SampleScore> score_records_serial(const std::vector<TrajectoryRecord>& records,
                                              const SampleIndex& samples,
                                              double anls_threshold) {
  std::vector<SampleScore> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back(score_record(r, sample_for(samples, r.sample_id), anls_threshold));
  return out;
}

std::vector<double> anls_batch(const std::vector<AnlsPair>& pairs, double threshold) {
  std::vector<double> out(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = anls(p.pred, p.golds, threshold);
  }
  return out;
}

std::vector<double> anls_batch_serial(const std::vector<AnlsPair>& pairs, double threshold) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(anls(p.pred, p.golds, threshold));
  return out;
}

// ---- serialization -----------------------------------------------------------

json score_to_json(const SampleScore& s) {
  json j = {{"sample_id", s.sample_id},
            {"split", s.split_tag},
            {"accuracy", s.accuracy},
            {"anls", s.anls},
            {"keyframe_ids", s.keyframe_ids},
            {"used_fallback", s.used_fallback},
            {"failed", s.failed}};
  j["hit"] = s.hit ? json(*s.hit) : json(nullptr);
  return j;
}

SampleScore score_from_json(const json& j) {
  SampleScore s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.split_tag = j.value("split", std::string{});
  s.accuracy = j.at("accuracy").get<int>();
  s.anls = j.at("anls").get<double>();
  s.keyframe_ids = j.value("keyframe_ids", std::vector<int>{});
  s.used_fallback = j.value("used_fallback", false);
  s.failed = j.value("failed", false);
  if (auto h = j.find("hit"); h != j.end() && h->is_boolean()) s.hit = h->get<bool>();
  if (s.accuracy != 0 && s.accuracy != 1) throw SchemaMismatch("accuracy must be 0 or 1");
  if (s.anls < 0.0 || s.anls > 1.0) throw SchemaMismatch("anls must lie in [0,1]");
  return s;
}

json report_to_json(const MetricReport& r) {
  json j = {{"split", r.split_tag},
            {"n", r.n},
            {"accuracy", r.mean_accuracy},
            {"anls", r.mean_anls},
            {"hit_n", r.hit_n},
            {"failed", r.failed}};
  j["hit_rate"] = r.hit_rate ? json(*r.hit_rate) : json(nullptr);
  return j;
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  r.split_tag = j.at("split").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.mean_accuracy = j.at("accuracy").get<double>();
  r.mean_anls = j.at("anls").get<double>();
  r.hit_n = j.value("hit_n", std::size_t{0});
  r.failed = j.value("failed", std::size_t{0});
  if (auto h = j.find("hit_rate"); h != j.end() && h->is_number()) r.hit_rate = h->get<double>();
  return r;
}

void write_score_log(const std::filesystem::path& path, const std::vector<SampleScore>& scores,
                     const std::vector<MetricReport>& reports) {
  JsonlWriter out(path, true);
  for (const auto& s : scores) out.append(score_to_json(s));
  for (const auto& r : reports) out.append({{"summary", report_to_json(r)}});
}

std::vector<SampleScore> load_score_log(const std::filesystem::path& path) {
  std::vector<SampleScore> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    if (j.is_object() && j.contains("summary")) return;
    try {
      out.push_back(score_from_json(j));
    } catch (const std::exception& e) {
      throw MalformedRecord(line, std::string("score record: ") + e.what());
    }
  });
  return out;
}

std::string format_report_table(const std::vector<MetricReport>& reports) {
  std::size_t w = 5;
  for (const auto& r : reports) w = std::max(w, r.split_tag.size());
  char buf[256];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-*s  %6s  %7s  %7s  %7s\n", static_cast<int>(w), "Split", "N",
                "ACC.", "ANLS", "Hit");
  os << buf;
  for (const auto& r : reports) {
    const std::string hit = r.hit_rate ? fmt2(*r.hit_rate) : "-";
    std::snprintf(buf, sizeof buf, "%-*s  %6zu  %7s  %7s  %7s\n", static_cast<int>(w),
                  r.split_tag.c_str(), r.n, fmt2(r.mean_accuracy).c_str(),
                  fmt2(r.mean_anls).c_str(), hit.c_str());
    os << buf;
  }
  return os.str();
}

std::string format_report_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "split,n,accuracy,anls,hit_rate\n";
  for (const auto& r : reports) {
    os << r.split_tag << ',' << r.n << ',' << fmt2(r.mean_accuracy) << ','
       << fmt2(r.mean_anls) << ',' << (r.hit_rate ? fmt2(*r.hit_rate) : "") << '\n';
  }
  return os.str();
}

}  // namespace vtagent
