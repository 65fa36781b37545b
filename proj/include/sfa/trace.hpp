#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfa/focus.hpp"
#include "sfa/scan.hpp"

namespace sfa {

struct WindowTrace {
    Window window;  // adapted
    double initial_scale = 0.0;
    std::vector<std::size_t> contained_line_ids;
    std::optional<RelevanceScore> score;
};

struct FrameTrace {
    std::size_t frame_index = 0;
    std::size_t source_index = 0;
    double timestamp = 0.0;
    std::vector<TextLineDetection> detections;
    bool detection_failed = false;
    std::vector<WindowTrace> windows;  // only windows that survived the empty-window filter
    std::optional<Anchor> selected;
    std::optional<double> selected_score;
};

/// Deterministic record of one run. Everything scheduling- or cache-dependent
/// (timings, call counts) lives in RunStats instead.
struct Trace {
    std::string mode;  // "sfa" or "baseline"
    std::string question;
    double alpha = 0.0;
    double tau = 0.0;
    std::string fps;
    std::vector<FrameTrace> frames;
    int fallback_level = 0;  // 0 none, 1 text-bearing frames, 2 all sampled frames
    std::vector<std::string> warnings;
    std::string raw_answer;
};

struct RunStats {
    std::map<std::string, double> timing_ms;
    std::size_t detector_calls = 0;
    std::size_t scorer_calls = 0;
    std::size_t answerer_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
};

nlohmann::json to_json(const Rect& r);
Rect rect_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TextLineDetection& d);
TextLineDetection detection_from_trace_json(const nlohmann::json& j);
nlohmann::json to_json(const RelevanceScore& s);
RelevanceScore score_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Window& w);
nlohmann::json to_json(const Trace& t);
nlohmann::json to_json(const RunStats& s);

}  // namespace sfa
