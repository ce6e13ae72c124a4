#include "vtagent/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

#include "vtagent/curation.hpp"
#include "vtagent/error.hpp"
#include "vtagent/metrics.hpp"
#include "vtagent/oracle.hpp"
#include "vtagent/report.hpp"

namespace fs = std::filesystem;

namespace vtagent::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

fs::path prepare_out_dir(const RunConfig& config) {
  if (config.out_dir.empty()) throw ConfigError("--out-dir must not be empty");
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  return dir;
}

// Maps the error taxonomy onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MalformedRecord& e) {
    err << "schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SchemaMismatch& e) {
    err << "schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DuplicateSampleId& e) {
    err << "schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingFrameFile& e) {
    err << "data error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

EngineConfig checked_engine(const RunConfig& config) {
  validate_config(config.engine);
  if (config.anls_threshold < 0.0 || config.anls_threshold > 1.0)
    throw ConfigError("anls_threshold must lie in [0, 1]");
  return config.engine;
}

std::string pct(std::size_t num, std::size_t den) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", den ? 100.0 * static_cast<double>(num) / static_cast<double>(den) : 0.0);
  return buf;
}

}  // namespace

std::shared_ptr<Backend> make_backend(const RunConfig& config) {
  if (config.backend == "replay") {
    if (config.store.empty()) throw ConfigError("replay backend needs --store");
    if (!fs::exists(config.store)) throw ConfigError("transcript store not found: " + config.store);
    return std::make_shared<ReplayBackend>(std::make_shared<TranscriptStore>(config.store), true);
  }

  std::shared_ptr<Backend> inner;
  if (config.backend == "scripted") {
    if (config.script.empty()) throw ConfigError("scripted backend needs --script");
    if (!fs::exists(config.script)) throw ConfigError("script not found: " + config.script);
    inner = ScriptedBackend::from_file(config.script);
  } else if (config.backend == "http") {
    if (config.model.empty()) throw ConfigError("http backend needs a model (--model or VTAGENT_MODEL)");
    if (config.timeout_s <= 0) throw ConfigError("timeout_s must be positive");
    EndpointConfig ep;
    ep.base_url = config.api_base;
    ep.model = config.model;
    ep.api_key = config.api_key;
    if (config.image_mode == "data") ep.image_mode = EndpointConfig::ImageMode::DataUri;
    else if (config.image_mode == "file") ep.image_mode = EndpointConfig::ImageMode::FileUrl;
    else throw ConfigError("image_mode must be data or file");
    ep.timeout = std::chrono::milliseconds(static_cast<long long>(config.timeout_s * 1000));
    if (!endpoint_reachable(ep)) throw BackendUnavailable("endpoint unreachable: " + ep.base_url);
    inner = std::make_shared<HttpBackend>(ep);
  } else {
    throw ConfigError("unknown backend: " + config.backend + " (http, scripted, replay)");
  }

  const fs::path store = config.store.empty() ? fs::path(config.out_dir) / "transcripts.jsonl"
                                              : fs::path(config.store);
  if (store.has_parent_path()) fs::create_directories(store.parent_path());
  return std::make_shared<RecordingBackend>(inner, std::make_shared<TranscriptStore>(store));
}

std::vector<Sample> load_samples(const RunConfig& config) {
  if (config.manifest.empty()) throw ConfigError("--manifest is required");
  if (!fs::exists(config.manifest)) throw ConfigError("manifest not found: " + config.manifest);
  LoadOptions opts;
  if (!config.frames_root.empty()) opts.frames_root = fs::path(config.frames_root);
  const SamplingPolicy policy = sampling_policy(config);
  auto manifest = load_manifest(config.manifest, opts);
  std::vector<Sample> samples;
  samples.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) samples.push_back(sample_frames(s, policy));
  if (config.dedupe) samples = dedupe_samples(samples);
  return samples;
}

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const EngineConfig engine = checked_engine(config);
    const auto samples = load_samples(config);
    const fs::path dir = prepare_out_dir(config);
    auto backend = make_backend(config);

    const fs::path log = dir / "trajectories.jsonl";
    const BatchSummary batch = run_batch(samples, *backend, engine, log, config.resume);
    const auto records = load_trajectory_log(log);
    const auto scores = score_records(records, index_samples(samples), config.anls_threshold);
    if (scores.empty()) throw ConfigError("manifest has no samples");
    const auto reports = aggregate_by_split(scores);
    write_score_log(dir / "scores.jsonl", scores, reports);

    const std::string table = format_report_table(reports);
    write_text(dir / "summary.txt", table);
    write_text(dir / "summary.csv", format_report_csv(reports));
    std::size_t fallbacks = 0;
    for (const auto& r : records) fallbacks += r.used_fallback;
    out << table;
    out << "samples " << batch.total << ", run " << batch.executed << ", resumed " << batch.skipped
        << ", failed " << batch.failed << ", fallback " << fallbacks << '\n';
    return kExitOk;
  });
}

int cmd_oracle(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const EngineConfig engine = checked_engine(config);
    const auto samples = load_samples(config);
    if (samples.empty()) throw ConfigError("manifest has no samples");
    const fs::path dir = prepare_out_dir(config);
    auto backend = make_backend(config);

    const auto results = run_framewise(samples, *backend, engine, dir / "framewise.jsonl");
    const auto video =
        run_holistic(samples, *backend, engine, dir / "video_scores.jsonl", config.anls_threshold);
    const OracleReport report = oracle_upper_bound(results, &video);
    write_partition(report.partition, dir);

    const std::string table = format_oracle_table(report);
    write_text(dir / "oracle.txt", table);
    out << table;
    std::size_t failed_frames = 0;
    for (const auto& r : results) failed_frames += r.failed_frames.size();
    if (failed_frames) out << "frames lost to backend errors: " << failed_frames << '\n';
    return kExitOk;
  });
}

int cmd_curate_sft(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    EngineConfig engine = checked_engine(config);
    engine.temperature = config.curation_temperature;
    const auto samples = load_samples(config);
    const fs::path dir = prepare_out_dir(config);
    auto backend = make_backend(config);

    CurationOptions opts;
    opts.max_attempts = config.curation_attempts;
    opts.resume = config.resume;
    const auto sum = generate_sft_corpus(samples, *backend, engine, opts, dir);
    out << sum.processed << " new, " << sum.skipped << " already done\n";
    out << "kept " << pct(sum.kept, sum.inputs) << " of inputs (" << sum.kept << '/' << sum.inputs
        << "), dropped " << sum.dropped << '\n';
    return kExitOk;
  });
}

int cmd_curate_rl(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const EngineConfig engine = checked_engine(config);
    const auto samples = load_samples(config);
    const fs::path dir = prepare_out_dir(config);
    auto backend = make_backend(config);

    CurationOptions opts;
    opts.max_attempts = config.curation_attempts;
    opts.resume = config.resume;
    const auto sum = filter_rl_corpus(samples, *backend, engine, opts, dir);
    out << sum.processed << " new, " << sum.skipped << " already done\n";
    out << "kept " << pct(sum.kept, sum.inputs) << " of inputs (" << sum.kept << '/' << sum.inputs
        << "), dropped " << sum.dropped << '\n';
    out << "correct_count  samples\n";
    for (int k = 0; k <= opts.max_attempts; ++k) {
      auto it = sum.correct_histogram.find(k);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%13d  %7zu%s\n", k,
                    it == sum.correct_histogram.end() ? std::size_t{0} : it->second,
                    retain_for_rl(k, opts.max_attempts) ? "" : "  (dropped)");
      out << buf;
    }
    return kExitOk;
  });
}

int cmd_grpo(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    grpo::validate(config.grpo);
    const fs::path dir = prepare_out_dir(config);
    const auto curve = grpo::train(config.grpo);
    write_text(dir / "curve.csv", grpo::curve_csv(curve));
    if (config.svg) write_text(dir / "curve.svg", svg_learning_curve(curve));

    const std::size_t window = std::min<std::size_t>(50, curve.points.size());
    const auto tail = curve.tail_mean(window);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "final mean reward %.4f, tool rate %.4f, accuracy %.4f (last %zu steps)\n"
                  "chance accuracy %.4f, expected accuracy after training %.4f\n",
                  tail.mean_reward, tail.tool_rate, tail.mean_accuracy, window,
                  curve.chance_accuracy, curve.final_accuracy);
    out << buf;
    return kExitOk;
  });
}

int cmd_report(const RunConfig& config, const ReportInputs& inputs, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    if (inputs.scores.empty()) throw ConfigError("report needs at least one --scores NAME=PATH");
    std::vector<SystemReports> systems;
    std::vector<SystemScores> per_sample;
    for (const auto& [name, path] : inputs.scores) {
      if (!fs::exists(path)) throw ConfigError("score log not found: " + path);
      std::vector<SampleScore> scores;
      try {
        scores = load_score_log(path);
      } catch (const MalformedRecord& e) {
        throw MalformedRecord(e.line_no, path + ": " + e.reason);
      }
      if (scores.empty()) throw SchemaMismatch(path + ": no score records");
      systems.push_back({name, aggregate_by_split(scores)});
      per_sample.push_back({name, std::move(scores)});
    }
    const fs::path dir = prepare_out_dir(config);

    const std::string table = format_comparison_table(systems);
    write_text(dir / "report.txt", table);
    write_text(dir / "report.csv", format_comparison_csv(systems));
    out << table;

    if (config.svg) {
      std::vector<BarGroup> groups;
      for (const auto& r : systems.front().reports) {
        BarGroup g{r.split_tag, {}};
        for (const auto& sys : systems)
          for (const auto& rr : sys.reports)
            if (rr.split_tag == r.split_tag) g.bars.emplace_back(sys.name, rr.mean_accuracy);
        groups.push_back(std::move(g));
      }
      write_text(dir / "report.svg", svg_bar_chart("Accuracy by split", groups, "ACC."));
    }

    if (inputs.partition_dir.empty()) return kExitOk;
    const Partition partition = read_partition(inputs.partition_dir);
    std::map<std::string, std::vector<int>> pseudo;
    fs::path framewise = inputs.framewise;
    if (framewise.empty() && fs::exists(fs::path(inputs.partition_dir) / "framewise.jsonl"))
      framewise = fs::path(inputs.partition_dir) / "framewise.jsonl";
    if (!framewise.empty()) pseudo = pseudo_keyframe_map(load_framewise_log(framewise));

    const auto rows = stratified_report(per_sample, partition, pseudo);
    const std::string strat = format_stratified_table(rows);
    write_text(dir / "stratified.txt", strat);
    write_text(dir / "stratified.csv", format_stratified_csv(rows));
    out << '\n' << strat;

    if (config.svg) {
      std::vector<BarGroup> groups;
      for (const char* subset : {"Set_s", "Set_u"}) {
        BarGroup g{subset, {}};
        for (const auto& r : rows)
          if (r.subset == subset && r.accuracy) g.bars.emplace_back(r.system, *r.accuracy);
        groups.push_back(std::move(g));
      }
      write_text(dir / "stratified.svg",
                 svg_bar_chart("Accuracy on Set_s and Set_u", groups, "ACC."));
    }
    return kExitOk;
  });
}

int cmd_config_show(const RunConfig& config, std::ostream& out) {
  out << format_config(config);
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env) {
  CLI::App app{"Locate-and-focus video text QA harness", "vtagent"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "flat key = value config file");
  std::vector<std::string> sets;
  app.add_option("--set", sets, "override any config key (key=value)");

  struct Valued {
    const char* flag;
    const char* key;
    const char* help;
  };
  static const Valued valued[] = {
      {"--manifest", "manifest", "dataset manifest (JSONL)"},
      {"--out-dir", "out_dir", "output directory"},
      {"--backend", "backend", "http | scripted | replay"},
      {"--api-base", "api_base", "chat-completions base URL"},
      {"--model", "model", "served model name"},
      {"--script", "script", "scripted backend file"},
      {"--store", "store", "transcript store"},
      {"--frames-root", "frames_root", "directory for relative frame paths"},
      {"--frames", "frames", "uniformly sampled frames per video (0: all)"},
      {"--cap", "cap", "keyframe cap"},
      {"--parallelism", "parallelism", "in-flight episodes"},
      {"--seed", "seed", "base seed"},
      {"--fallback", "fallback", "uniform | direct"},
      {"--max-attempts", "max_attempts", "parse and backend retries"},
      {"--group", "group", "GRPO group size G"},
      {"--eps", "eps", "GRPO clip range"},
      {"--lr", "lr", "GRPO learning rate"},
      {"--steps", "steps", "GRPO steps"},
  };
  std::vector<std::string> values(std::size(valued));
  std::vector<CLI::Option*> options;
  for (std::size_t i = 0; i < std::size(valued); ++i)
    options.push_back(app.add_option(valued[i].flag, values[i], valued[i].help));
  bool resume = false, no_tool_reward = false, svg = false, dedupe = false;
  auto* resume_opt = app.add_flag("--resume", resume, "continue an interrupted run");
  auto* no_tool_opt = app.add_flag("--no-tool-reward", no_tool_reward, "disable R_tool");
  auto* svg_opt = app.add_flag("--svg", svg, "also write SVG plots");
  auto* dedupe_opt = app.add_flag("--dedupe", dedupe, "drop duplicate (video, question, answers)");

  auto* eval = app.add_subcommand("eval", "run the two-turn agent and score it");
  auto* oracle = app.add_subcommand("oracle", "frame-wise oracle, partition and gap");
  auto* sft = app.add_subcommand("curate-sft", "teacher rejection sampling");
  auto* rl = app.add_subcommand("curate-rl", "difficulty filtering");
  auto* grpo_cmd = app.add_subcommand("grpo", "toy GRPO training");
  auto* report = app.add_subcommand("report", "merge score logs into comparison tables");
  auto* config_cmd = app.add_subcommand("config", "configuration");
  auto* show = config_cmd->add_subcommand("show", "print the resolved configuration");
  config_cmd->require_subcommand(1);

  std::vector<std::string> score_args;
  ReportInputs report_inputs;
  report->add_option("--scores", score_args, "NAME=PATH score log (repeatable)");
  report->add_option("--partition", report_inputs.partition_dir, "directory with set_s.ids/set_u.ids");
  report->add_option("--framewise", report_inputs.framewise, "frame-wise log for hit rates");

  std::vector<std::string> argv_store;
  argv_store.push_back("vtagent");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  return guarded(err, [&] {
    std::vector<std::pair<std::string, std::string>> flags;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + s);
      flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (std::size_t i = 0; i < options.size(); ++i)
      if (options[i]->count()) flags.emplace_back(valued[i].key, values[i]);
    if (resume_opt->count()) flags.emplace_back("resume", "true");
    if (no_tool_opt->count()) flags.emplace_back("tool_reward", "false");
    if (svg_opt->count()) flags.emplace_back("svg", "true");
    if (dedupe_opt->count()) flags.emplace_back("dedupe", "true");

    const fs::path file(config_file);
    const RunConfig config = resolve_config(config_file.empty() ? nullptr : &file, flags, env);

    if (*eval) return cmd_eval(config, out, err);
    if (*oracle) return cmd_oracle(config, out, err);
    if (*sft) return cmd_curate_sft(config, out, err);
    if (*rl) return cmd_curate_rl(config, out, err);
    if (*grpo_cmd) return cmd_grpo(config, out, err);
    if (*show) return cmd_config_show(config, out);
    if (*report) {
      for (const auto& s : score_args) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
          throw ConfigError("--scores expects NAME=PATH, got " + s);
        report_inputs.scores.emplace_back(s.substr(0, eq), s.substr(eq + 1));
      }
      return cmd_report(config, report_inputs, out, err);
    }
    throw ConfigError("no command given");
  });
}

}  // namespace vtagent::cli
