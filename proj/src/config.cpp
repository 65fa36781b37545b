#include "sfa/config.hpp"

#include <fstream>
#include <set>

#include "sfa/error.hpp"

namespace sfa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::configuration, what); }

fs::path resolve_path(const fs::path& p, const fs::path& base) { return p.is_relative() ? base / p : p; }

template <class T>
T field(const json& j, const char* name) {
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        bad(std::string("config field '") + name + "' has the wrong type");
    }
}

Rational parse_fps(const std::string& text) {
    try {
        return Rational::parse(text);
    } catch (const Error&) {
        bad("invalid fps '" + text + "'");
    }
}

}  // namespace

ResolvedConfig resolve_config(const std::optional<json>& file, const fs::path& file_dir,
                              const ConfigOverrides& flags) {
    ResolvedConfig out;
    PipelineConfig& p = out.pipeline;

    if (file) {
        const json& j = *file;
        if (!j.is_object()) bad("config file must hold an object");
        static const std::set<std::string> known{"alpha",         "tau",           "fps",        "fallback",
                                                 "max_in_flight", "scorer_retries", "answer_retries",
                                                 "cache_dir",     "mock_fixtures", "prompts",    "endpoints"};
        for (const auto& [key, _] : j.items()) {
            if (!known.count(key)) bad("unknown config field '" + key + "'");
        }
        if (j.contains("alpha")) p.alpha = field<double>(j, "alpha");
        if (j.contains("tau")) p.tau = field<double>(j, "tau");
        if (j.contains("fps")) p.target_fps = parse_fps(j["fps"].is_string() ? j["fps"].get<std::string>() : j["fps"].dump());
        if (j.contains("fallback")) p.fallback = parse_fallback_policy(field<std::string>(j, "fallback"));
        if (j.contains("max_in_flight")) p.max_in_flight = field<int>(j, "max_in_flight");
        if (j.contains("scorer_retries")) p.scorer_retries = field<int>(j, "scorer_retries");
        if (j.contains("answer_retries")) p.answer_retries = field<int>(j, "answer_retries");
        if (j.contains("cache_dir")) p.cache_dir = resolve_path(field<std::string>(j, "cache_dir"), file_dir);
        if (j.contains("mock_fixtures")) out.mock_fixtures = resolve_path(field<std::string>(j, "mock_fixtures"), file_dir);
        if (j.contains("prompts")) {
            const json& prompts = j["prompts"];
            if (!prompts.is_object()) bad("config field 'prompts' must be an object");
            for (const auto& [key, value] : prompts.items()) {
                if (!value.is_string()) bad("prompt path '" + key + "' must be a string");
                auto tmpl = PromptTemplate::load(resolve_path(value.get<std::string>(), file_dir));
                if (key == "relevance") {
                    p.relevance_prompt = std::move(tmpl);
                } else if (key == "answer") {
                    p.answer_prompt = std::move(tmpl);
                } else if (key == "detection") {
                    out.detection_prompt = std::move(tmpl);
                } else {
                    bad("unknown prompt '" + key + "'");
                }
            }
        }
        if (j.contains("endpoints")) {
            const json& e = j["endpoints"];
            if (!e.is_object()) bad("config field 'endpoints' must be an object");
            for (const auto& [key, _] : e.items()) {
                if (key != "default" && key != "detector" && key != "scorer" && key != "answerer") {
                    bad("unknown endpoint role '" + key + "'");
                }
            }
            auto role = [&](const char* name) {
                json merged = e.value("default", json::object());
                if (e.contains(name)) merged.update(e[name]);
                return endpoint_from_json(merged);
            };
            out.endpoints = LiveEndpoints{role("detector"), role("scorer"), role("answerer")};
        }
    }

    if (flags.alpha) p.alpha = *flags.alpha;
    if (flags.tau) p.tau = *flags.tau;
    if (flags.fps) p.target_fps = parse_fps(*flags.fps);
    if (flags.fallback) p.fallback = parse_fallback_policy(*flags.fallback);
    if (flags.max_in_flight) p.max_in_flight = *flags.max_in_flight;
    if (flags.cache_dir) p.cache_dir = *flags.cache_dir;
    if (flags.mock_fixtures) out.mock_fixtures = *flags.mock_fixtures;

    p.validate();
    return out;
}

ResolvedConfig load_config(const std::optional<fs::path>& path, const ConfigOverrides& flags) {
    if (!path) return resolve_config(std::nullopt, fs::current_path(), flags);
    std::ifstream in(*path);
    if (!in) bad("cannot read config file " + path->string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) bad("config file " + path->string() + " is not valid JSON");
    return resolve_config(j, path->has_parent_path() ? path->parent_path() : fs::path("."), flags);
}

Backends make_backends(const ResolvedConfig& config) {
    if (config.mock_fixtures) return make_mock_backends(load_mock_fixtures(*config.mock_fixtures)).as_backends();
    if (!config.endpoints) bad("no backends configured: pass --mock-fixtures or give endpoints in --config");
    auto transport = make_http_transport();
    auto endpoints = *config.endpoints;
    for (auto* e : {&endpoints.detector, &endpoints.scorer, &endpoints.answerer}) {
        if (e->max_in_flight > config.pipeline.max_in_flight) e->max_in_flight = config.pipeline.max_in_flight;
    }
    Backends b = make_live_backends(endpoints, transport);
    b.detector = std::make_shared<LiveDetector>(std::make_shared<VisionChatClient>(endpoints.detector, transport),
                                                config.detection_prompt);
    return b;
}

}  // namespace sfa
