#include "cli_app.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sfa/cache.hpp"
#include "sfa/config.hpp"
#include "sfa/eval.hpp"
#include "sfa/pipeline.hpp"
#include "sfa/scan.hpp"
#include "sfa/trace.hpp"

namespace sfa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::configuration: return kConfiguration;
        case ErrorKind::argument: return kArgument;
        case ErrorKind::source: return kSource;
        case ErrorKind::empty_video: return kEmptyVideo;
        case ErrorKind::degenerate_region: return kDegenerateRegion;
        case ErrorKind::encoding: return kEncoding;
        case ErrorKind::detection: return kDetection;
        case ErrorKind::transport: return kTransport;
        case ErrorKind::protocol: return kProtocol;
        case ErrorKind::fixture: return kFixture;
        case ErrorKind::answering: return kAnswering;
        case ErrorKind::manifest: return kManifest;
        case ErrorKind::evaluation: return kEvaluation;
    }
    return kInternal;
}

std::string exit_code_table() {
    std::ostringstream s;
    s << "Exit codes:\n"
      << "  0  success\n"
      << "  1  internal error\n"
      << "  2  usage error\n";
    for (auto kind : {ErrorKind::configuration, ErrorKind::argument, ErrorKind::source, ErrorKind::empty_video,
                      ErrorKind::degenerate_region, ErrorKind::encoding, ErrorKind::detection, ErrorKind::transport,
                      ErrorKind::protocol, ErrorKind::fixture, ErrorKind::answering, ErrorKind::manifest,
                      ErrorKind::evaluation}) {
        char line[64];
        std::snprintf(line, sizeof(line), "  %-2d %s error\n", exit_code_for(kind), std::string(to_string(kind)).c_str());
        s << line;
    }
    return s.str();
}

namespace {

struct CommonFlags {
    std::optional<std::string> config;
    std::optional<double> alpha;
    std::optional<double> tau;
    std::optional<std::string> fps;
    std::optional<std::string> fallback;
    std::optional<int> max_in_flight;
    std::optional<std::string> cache_dir;
    std::optional<std::string> mock_fixtures;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "JSON configuration file");
        app->add_option("--alpha", alpha, "initial window ratio in [0.5, 1.0] (default 0.6)");
        app->add_option("--tau", tau, "relevance threshold in [0, 1] (default 0.7)");
        app->add_option("--fps", fps, "sampling rate, e.g. 1, 2 or 1/2 (default 1)");
        app->add_option("--fallback", fallback, "cascade | sampled_frames | none (default cascade)");
        app->add_option("--max-in-flight", max_in_flight, "concurrent backend requests (default 4)");
        app->add_option("--cache-dir", cache_dir, "content-addressed result cache directory");
        app->add_option("--mock-fixtures", mock_fixtures, "serve all backends from a fixture file");
    }

    ResolvedConfig resolve() const {
        ConfigOverrides o;
        o.alpha = alpha;
        o.tau = tau;
        o.fps = fps;
        o.fallback = fallback;
        o.max_in_flight = max_in_flight;
        if (cache_dir) o.cache_dir = fs::path(*cache_dir);
        if (mock_fixtures) o.mock_fixtures = fs::path(*mock_fixtures);
        return load_config(config ? std::optional<fs::path>(*config) : std::nullopt, o);
    }
};

FrameSource open_frames(const std::string& path) { return open_frame_directory(path); }

int cmd_run(const ResolvedConfig& cfg, const std::string& frames, const std::string& question,
            const std::string& mode_name, const std::optional<std::string>& trace_path, std::ostream& out,
            std::ostream& err) {
    const EvalMode mode = parse_eval_mode(mode_name);
    const FrameSource source = open_frames(frames);
    const Backends backends = make_backends(cfg);
    AnswerResult result = mode == EvalMode::sfa ? run_sfa(source, question, cfg.pipeline, backends)
                                                : run_baseline(source, question, cfg.pipeline, *backends.answerer);
    fs::path trace_file;
    if (trace_path) {
        trace_file = *trace_path;
    } else {
        fs::path dir = fs::path(frames).lexically_normal();
        if (dir.filename().empty()) dir = dir.parent_path();
        trace_file = dir.parent_path() / (dir.filename().string() + ".trace.json");
    }
    write_run_trace(result, trace_file);
    out << result.answer << "\n";
    for (const auto& w : result.trace.warnings) err << "warning: " << w << "\n";
    return kOk;
}

int cmd_eval(const ResolvedConfig& cfg, const std::string& manifest_path, const std::string& mode_name,
             const std::string& report_dir, bool write_traces, int jobs, std::ostream& out) {
    const EvalMode mode = parse_eval_mode(mode_name);
    // Manifest problems abort here, before any backend is touched.
    const auto manifest = load_manifest(manifest_path, PathCheck::deferred);

    std::optional<Backends> shared;
    std::mutex fixture_mutex;
    std::map<fs::path, Backends> per_fixture;
    auto resolver = [&](const QASample& sample) -> Backends {
        if (sample.mock_fixtures) {
            std::lock_guard lock(fixture_mutex);
            auto it = per_fixture.find(*sample.mock_fixtures);
            if (it == per_fixture.end()) {
                it = per_fixture
                         .emplace(*sample.mock_fixtures,
                                  make_mock_backends(load_mock_fixtures(*sample.mock_fixtures)).as_backends())
                         .first;
            }
            return it->second;
        }
        std::lock_guard lock(fixture_mutex);
        if (!shared) shared = make_backends(cfg);
        return *shared;
    };

    EvalOptions options;
    options.mode = mode;
    options.max_concurrent_samples = jobs;
    if (write_traces) options.trace_dir = fs::path(report_dir) / "traces";
    EvalReport report = evaluate(manifest, cfg.pipeline, resolver, options);
    write_report(report, report_dir);
    out << report.summary_line() << "\n";
    out << "samples: " << report.total << " scored: " << report.scored << " errored: " << report.errored << "\n";
    return kOk;
}

int cmd_scan_debug(const ResolvedConfig& cfg, const std::string& frames, const std::string& out_dir, bool crops,
                   std::ostream& out) {
    const FrameSource source = open_frames(frames);
    const auto sampled = sample_frames(source, cfg.pipeline.target_fps);
    const Backends backends = make_backends(cfg);
    fs::create_directories(out_dir);
    char name[64];
    for (const auto& frame : sampled) {
        json dump{{"frame_index", frame.frame_index}, {"source_index", frame.source_index},
                  {"timestamp", frame.timestamp},     {"width", frame.width},
                  {"height", frame.height},           {"alpha", cfg.pipeline.alpha}};
        const auto lines = normalize_detections(backends.detector->detect(frame), frame.width, frame.height);
        json dets = json::array();
        for (std::size_t i = 0; i < lines.size(); ++i) {
            json d = to_json(lines[i]);
            d["id"] = i;
            dets.push_back(std::move(d));
        }
        dump["detections"] = std::move(dets);
        if (lines.empty()) {
            dump["discarded"] = "no text";
            dump["windows"] = json::array();
        } else {
            const auto regions = scan_frame(frame, lines, cfg.pipeline.alpha);
            json windows = json::array();
            for (const auto& r : regions) {
                json w = to_json(r.window);
                w["contained_line_ids"] = r.contained_line_ids;
                if (crops) {
                    std::snprintf(name, sizeof(name), "frame_%06zu_%s.png", frame.frame_index,
                                  std::string(short_name(r.window.anchor)).c_str());
                    write_image(r.normalized_image, fs::path(out_dir) / name);
                    w["crop"] = name;
                }
                windows.push_back(std::move(w));
            }
            dump["windows"] = std::move(windows);
        }
        std::snprintf(name, sizeof(name), "frame_%06zu.json", frame.frame_index);
        std::ofstream f(fs::path(out_dir) / name);
        f << dump.dump(2) << "\n";
        out << name << ": " << (lines.empty() ? std::string("discarded: no text")
                                               : std::to_string(dump["windows"].size()) + " window(s)")
            << "\n";
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Scan-focus-amplify video text question answering"};
    app.footer(exit_code_table());
    app.require_subcommand(1);

    CommonFlags run_flags, eval_flags, scan_flags;

    auto* run_cmd = app.add_subcommand("run", "answer one question about one frame directory");
    std::string run_frames, run_question, run_mode = "sfa";
    std::optional<std::string> run_trace;
    run_cmd->add_option("--frames", run_frames, "frame directory (%06d.png + frames.meta)")->required();
    run_cmd->add_option("--question", run_question, "question text")->required();
    run_cmd->add_option("--mode", run_mode, "sfa | baseline")->check(CLI::IsMember({"sfa", "baseline"}));
    run_cmd->add_option("--trace", run_trace, "trace output path (default <frames>.trace.json)");
    run_flags.attach(run_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a manifest and write a report");
    std::string eval_manifest, eval_mode = "sfa", report_dir = "report";
    bool eval_traces = false;
    int eval_jobs = 1;
    eval_cmd->add_option("--manifest", eval_manifest, "JSON-lines manifest")->required();
    eval_cmd->add_option("--mode", eval_mode, "sfa | baseline")->check(CLI::IsMember({"sfa", "baseline"}));
    eval_cmd->add_option("--report-dir", report_dir, "output directory (default ./report)");
    eval_cmd->add_flag("--traces", eval_traces, "also write one trace per sample");
    eval_cmd->add_option("--jobs", eval_jobs, "samples evaluated concurrently (default 1)")
        ->check(CLI::PositiveNumber);
    eval_flags.attach(eval_cmd);

    auto* scan_cmd = app.add_subcommand("scan-debug", "dump the scan-stage windows of every sampled frame");
    std::string scan_frames, scan_out = "scan_debug";
    bool scan_crops = false;
    scan_cmd->add_option("--frames", scan_frames, "frame directory")->required();
    scan_cmd->add_option("--out", scan_out, "output directory (default ./scan_debug)");
    scan_cmd->add_flag("--crops", scan_crops, "write each candidate's normalized crop as PNG");
    scan_flags.attach(scan_cmd);

    auto* cache_cmd = app.add_subcommand("cache", "inspect or clear a result cache");
    std::string cache_dir, cache_action = "stats";
    cache_cmd->add_option("action", cache_action, "stats | clear")->check(CLI::IsMember({"stats", "clear"}));
    cache_cmd->add_option("--cache-dir", cache_dir, "cache directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (run_cmd->parsed()) {
            return cmd_run(run_flags.resolve(), run_frames, run_question, run_mode, run_trace, out, err);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_flags.resolve(), eval_manifest, eval_mode, report_dir, eval_traces, eval_jobs, out);
        }
        if (scan_cmd->parsed()) return cmd_scan_debug(scan_flags.resolve(), scan_frames, scan_out, scan_crops, out);
        if (cache_cmd->parsed()) {
            ResultCache cache(cache_dir);
            if (cache_action == "clear") {
                cache.clear();
                out << "cleared " << cache_dir << "\n";
            } else {
                out << "detections: " << cache.size(CacheStage::detections) << "\n"
                    << "scores: " << cache.size(CacheStage::scores) << "\n"
                    << "answers: " << cache.size(CacheStage::answers) << "\n";
            }
            return kOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kUsage;
}

}  // namespace sfa::cli
