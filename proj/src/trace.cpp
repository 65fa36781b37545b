#include "sfa/trace.hpp"

#include "sfa/error.hpp"

namespace sfa {

using nlohmann::json;

json to_json(const Rect& r) { return json::array({r.x0, r.y0, r.x1, r.y1}); }

Rect rect_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw Error(ErrorKind::argument, "rect must hold four numbers");
    return Rect{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json to_json(const TextLineDetection& d) {
    return json{{"bbox", to_json(d.bbox)}, {"confidence", d.confidence}, {"text", d.transcription}};
}

TextLineDetection detection_from_trace_json(const json& j) {
    TextLineDetection d;
    d.bbox = rect_from_json(j.at("bbox"));
    d.confidence = j.at("confidence").get<double>();
    d.transcription = j.value("text", "");
    return d;
}

json to_json(const RelevanceScore& s) {
    json j{{"value", s.value}, {"raw", s.raw_response}, {"status", std::string(to_string(s.parse_status))}};
    if (!s.note.empty()) j["note"] = s.note;
    return j;
}

RelevanceScore score_from_json(const json& j) {
    RelevanceScore s;
    s.value = j.at("value").get<double>();
    s.raw_response = j.at("raw").get<std::string>();
    const auto status = parse_status_from(j.at("status").get<std::string>());
    if (!status) throw Error(ErrorKind::argument, "unknown score status");
    s.parse_status = *status;
    s.note = j.value("note", "");
    return s;
}

json to_json(const Window& w) {
    return json{{"anchor", std::string(to_string(w.anchor))}, {"rect", to_json(w.rect)}, {"scale", w.scale}};
}

json to_json(const Trace& t) {
    json frames = json::array();
    for (const auto& f : t.frames) {
        json dets = json::array();
        for (const auto& d : f.detections) dets.push_back(to_json(d));
        json windows = json::array();
        for (const auto& w : f.windows) {
            json wj = to_json(w.window);
            wj["initial_scale"] = w.initial_scale;
            wj["contained_line_ids"] = w.contained_line_ids;
            wj["score"] = w.score ? to_json(*w.score) : json(nullptr);
            windows.push_back(std::move(wj));
        }
        frames.push_back(json{
            {"frame_index", f.frame_index},
            {"source_index", f.source_index},
            {"timestamp", f.timestamp},
            {"detection_failed", f.detection_failed},
            {"detections", std::move(dets)},
            {"windows", std::move(windows)},
            {"selected", f.selected ? json(std::string(to_string(*f.selected))) : json(nullptr)},
            {"selected_score", f.selected_score ? json(*f.selected_score) : json(nullptr)},
        });
    }
    return json{{"mode", t.mode},
                {"question", t.question},
                {"alpha", t.alpha},
                {"tau", t.tau},
                {"fps", t.fps},
                {"frames", std::move(frames)},
                {"fallback_level", t.fallback_level},
                {"warnings", t.warnings},
                {"raw_answer", t.raw_answer}};
}

json to_json(const RunStats& s) {
    return json{{"timing_ms", s.timing_ms},
                {"backend_calls", {{"detector", s.detector_calls}, {"scorer", s.scorer_calls},
                                   {"answerer", s.answerer_calls}}},
                {"cache", {{"hits", s.cache_hits}, {"misses", s.cache_misses}}}};
}

}  // namespace sfa
