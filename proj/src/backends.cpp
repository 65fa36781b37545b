#include "sfa/backends.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "sfa/digest.hpp"
#include "sfa/error.hpp"

namespace sfa {

using nlohmann::json;

std::vector<TextLineDetection> normalize_detections(std::vector<TextLineDetection> dets, int frame_w, int frame_h) {
    std::vector<TextLineDetection> out;
    out.reserve(dets.size());
    for (auto& d : dets) {
        if (auto clipped = clip_detection(std::move(d), frame_w, frame_h)) out.push_back(std::move(*clipped));
    }
    std::stable_sort(out.begin(), out.end(), [](const TextLineDetection& a, const TextLineDetection& b) {
        if (a.bbox.y0 != b.bbox.y0) return a.bbox.y0 < b.bbox.y0;
        return a.bbox.x0 < b.bbox.x0;
    });
    return out;
}

// ---------------------------------------------------------------------------

void EndpointConfig::validate() const {
    if (base_url.empty()) throw Error(ErrorKind::configuration, "endpoint base_url is empty");
    if (model_name.empty()) throw Error(ErrorKind::configuration, "endpoint model_name is empty");
    if (!(timeout_s > 0)) throw Error(ErrorKind::configuration, "endpoint timeout must be positive");
    if (max_retries < 0) throw Error(ErrorKind::configuration, "endpoint max_retries must be nonnegative");
    if (max_in_flight < 1) throw Error(ErrorKind::configuration, "endpoint max_in_flight must be at least 1");
    if (max_tokens < 1) throw Error(ErrorKind::configuration, "endpoint max_tokens must be at least 1");
}

EndpointConfig endpoint_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::configuration, "endpoint must be an object");
    if (j.contains("api_key")) {
        throw Error(ErrorKind::configuration, "endpoint carries a literal api_key; use api_key_env instead");
    }
    EndpointConfig c;
    try {
        c.base_url = j.value("base_url", c.base_url);
        c.model_name = j.value("model_name", j.value("model", c.model_name));
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.timeout_s = j.value("timeout", c.timeout_s);
        c.max_retries = j.value("max_retries", c.max_retries);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.max_tokens = j.value("max_tokens", c.max_tokens);
        c.backoff_initial_s = j.value("backoff", c.backoff_initial_s);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::configuration, std::string("endpoint: ") + e.what());
    }
    return c;
}

json to_json(const EndpointConfig& c) {
    return json{{"base_url", c.base_url},       {"model_name", c.model_name}, {"api_key_env", c.api_key_env},
                {"timeout", c.timeout_s},       {"max_retries", c.max_retries},
                {"max_in_flight", c.max_in_flight}, {"max_tokens", c.max_tokens}};
}

json build_chat_request(std::string_view model, std::span<const std::vector<std::uint8_t>> png_images,
                        std::string_view text, const ChatDecoding& decoding) {
    json content = json::array();
    for (const auto& image : png_images) {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:image/png;base64," + base64_encode(image)}}}});
    }
    content.push_back({{"type", "text"}, {"text", std::string(text)}});
    return json{{"model", std::string(model)},
                {"messages", json::array({json{{"role", "user"}, {"content", std::move(content)}}})},
                {"temperature", decoding.temperature},
                {"max_tokens", decoding.max_tokens}};
}

std::string parse_chat_response(std::string_view body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::protocol, std::string("response is not JSON: ") + e.what());
    }
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) {
            std::string out;
            for (const auto& part : content) {
                if (part.value("type", "") == "text") out += part.at("text").get<std::string>();
            }
            return out;
        }
        if (content.is_null()) return {};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::protocol, std::string("unexpected response shape: ") + e.what());
    }
    throw Error(ErrorKind::protocol, "unexpected message content type");
}

InFlightLimiter::InFlightLimiter(int limit) : limit_(std::clamp(limit, 1, 4096)), slots_(limit_) {}
void InFlightLimiter::acquire() { slots_.acquire(); }
void InFlightLimiter::release() { slots_.release(); }

namespace {

std::string excerpt(const std::string& body) { return body.size() <= 200 ? body : body.substr(0, 200) + "..."; }

std::string send_with_retries(const EndpointConfig& config, const json& request, HttpTransport& transport) {
    std::string url = config.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    url += "/chat/completions";

    HttpTransport::Headers headers{{"Content-Type", "application/json"}};
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str()); key != nullptr && *key != '\0') {
            headers.emplace_back("Authorization", std::string("Bearer ") + key);
        }
    }
    const std::string body = request.dump();
    HttpResponse last;
    double delay = config.backoff_initial_s;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0 && delay > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            delay *= 2;
        }
        last = transport.post(url, headers, body, config.timeout_s);
        if (last.status >= 200 && last.status < 300) return parse_chat_response(last.body);
    }
    throw Error(ErrorKind::transport, "POST " + url + " failed with status " + std::to_string(last.status) +
                                          " after " + std::to_string(config.max_retries + 1) +
                                          " attempt(s): " + excerpt(last.body));
}

std::vector<std::vector<std::uint8_t>> encode_all(std::span<const FrameImage> frames) {
    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(encode_image(f));
    return out;
}

}  // namespace

VisionChatClient::VisionChatClient(EndpointConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)), limiter_(config_.max_in_flight) {
    config_.validate();
    if (!transport_) throw Error(ErrorKind::configuration, "vision client needs a transport");
}

std::string VisionChatClient::complete(std::span<const std::vector<std::uint8_t>> png_images, std::string_view text) {
    const auto request = build_chat_request(config_.model_name, png_images, text, ChatDecoding{0.0, config_.max_tokens});
    limiter_.acquire();
    try {
        auto reply = send_with_retries(config_, request, *transport_);
        limiter_.release();
        return reply;
    } catch (...) {
        limiter_.release();
        throw;
    }
}

std::string chat_vision(const EndpointConfig& config, std::span<const std::vector<std::uint8_t>> png_images,
                        std::string_view text, const ChatDecoding& decoding, HttpTransport& transport) {
    config.validate();
    if (png_images.empty() && text.empty()) throw Error(ErrorKind::argument, "chat request with no content");
    return send_with_retries(config, build_chat_request(config.model_name, png_images, text, decoding), transport);
}

// ---------------------------------------------------------------------------

namespace {

TextLineDetection detection_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::protocol, "detection entry is not an object: " + j.dump());
    TextLineDetection det;
    std::vector<std::pair<double, double>> pts;
    if (j.contains("bbox")) {
        const auto& b = j["bbox"];
        if (!b.is_array() || b.size() != 4) throw Error(ErrorKind::protocol, "bbox must hold four numbers");
        det.bbox = Rect{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    } else if (j.contains("polygon")) {
        for (const auto& p : j["polygon"]) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    } else if (j.contains("points")) {
        const auto& p = j["points"];
        if (!p.is_array() || p.size() % 2 != 0) throw Error(ErrorKind::protocol, "points must hold x,y pairs");
        for (std::size_t i = 0; i < p.size(); i += 2) pts.emplace_back(p[i].get<double>(), p[i + 1].get<double>());
    } else {
        throw Error(ErrorKind::protocol, "detection lacks bbox/polygon/points: " + j.dump());
    }
    if (!pts.empty()) {
        det.bbox = Rect{pts[0].first, pts[0].second, pts[0].first, pts[0].second};
        for (auto [x, y] : pts) {
            det.bbox.x0 = std::min(det.bbox.x0, x);
            det.bbox.y0 = std::min(det.bbox.y0, y);
            det.bbox.x1 = std::max(det.bbox.x1, x);
            det.bbox.y1 = std::max(det.bbox.y1, y);
        }
    }
    det.confidence = j.value("confidence", 1.0);
    if (j.contains("text") && j["text"].is_string()) det.transcription = j["text"].get<std::string>();
    return det;
}

}  // namespace

std::vector<TextLineDetection> parse_detection_reply(std::string_view reply) {
    std::vector<TextLineDetection> out;
    try {
        // Whole reply as a single JSON array.
        auto whole = json::parse(reply.begin(), reply.end(), nullptr, false);
        if (whole.is_array()) {
            for (const auto& e : whole) out.push_back(detection_from_json(e));
            return out;
        }
        std::istringstream in{std::string(reply)};
        std::string line;
        while (std::getline(in, line)) {
            auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line.compare(first, 3, "```") == 0) continue;
            auto j = json::parse(line, nullptr, false);
            if (j.is_discarded()) throw Error(ErrorKind::protocol, "detection line is not JSON: " + line);
            out.push_back(detection_from_json(j));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::protocol, std::string("malformed detection reply: ") + e.what());
    }
    return out;
}

LiveDetector::LiveDetector(std::shared_ptr<VisionChatClient> client, PromptTemplate prompt)
    : client_(std::move(client)), prompt_(std::move(prompt)) {}

std::vector<TextLineDetection> LiveDetector::detect(const FrameImage& frame) {
    const std::vector<std::vector<std::uint8_t>> images{encode_image(frame)};
    auto reply = client_->complete(images, prompt_.render(""));
    return normalize_detections(parse_detection_reply(reply), frame.width, frame.height);
}

std::string LiveScorer::score(const ScoreRequest& request) {
    const std::vector<std::vector<std::uint8_t>> images{encode_image(request.image)};
    return client_->complete(images, request.prompt);
}

std::string LiveAnswerer::answer(const AnswerRequest& request) {
    return client_->complete(encode_all(request.frames), request.prompt);
}

Backends make_live_backends(const LiveEndpoints& endpoints, std::shared_ptr<HttpTransport> transport) {
    if (!transport) transport = make_http_transport();
    return Backends{
        std::make_shared<LiveDetector>(std::make_shared<VisionChatClient>(endpoints.detector, transport)),
        std::make_shared<LiveScorer>(std::make_shared<VisionChatClient>(endpoints.scorer, transport)),
        std::make_shared<LiveAnswerer>(std::make_shared<VisionChatClient>(endpoints.answerer, transport)),
    };
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void fixture_error(const std::string& field, const std::string& what) {
    throw Error(ErrorKind::fixture, "field '" + field + "': " + what);
}

std::size_t parse_index(const std::string& key, const std::string& field) {
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
    if (ec != std::errc{} || ptr != key.data() + key.size() || key.empty()) {
        fixture_error(field, "key '" + key + "' is not a frame index");
    }
    return idx;
}

std::optional<std::string> raw_reply(const json& v, const std::string& field) {
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    fixture_error(field, "expected a number, string or null");
}

}  // namespace

MockFixtures parse_mock_fixtures(const json& j) {
    if (!j.is_object()) fixture_error("<root>", "fixture file must hold an object");
    MockFixtures fx;
    for (const auto& [key, _] : j.items()) {
        if (key != "detections" && key != "scores" && key != "answer" && key != "description") {
            fixture_error(key, "unknown section");
        }
    }

    if (j.contains("detections")) {
        const auto& section = j["detections"];
        if (!section.is_object()) fixture_error("detections", "must be an object keyed by frame index");
        for (const auto& [key, list] : section.items()) {
            const std::string field = "detections." + key;
            const auto frame = parse_index(key, field);
            if (!list.is_array()) fixture_error(field, "must be an array");
            auto& dets = fx.detections[frame];
            for (std::size_t i = 0; i < list.size(); ++i) {
                const std::string item = field + "[" + std::to_string(i) + "]";
                const auto& e = list[i];
                if (!e.is_object() || !e.contains("bbox")) fixture_error(item + ".bbox", "missing");
                const auto& b = e["bbox"];
                if (!b.is_array() || b.size() != 4 ||
                    !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); })) {
                    fixture_error(item + ".bbox", "must hold four numbers");
                }
                TextLineDetection d;
                d.bbox = Rect{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
                if (!d.bbox.valid()) fixture_error(item + ".bbox", "needs x0 < x1 and y0 < y1");
                if (e.contains("confidence")) {
                    if (!e["confidence"].is_number()) fixture_error(item + ".confidence", "must be a number");
                    d.confidence = e["confidence"].get<double>();
                    if (d.confidence < 0 || d.confidence > 1) fixture_error(item + ".confidence", "outside [0,1]");
                }
                if (e.contains("text")) {
                    if (!e["text"].is_string()) fixture_error(item + ".text", "must be a string");
                    d.transcription = e["text"].get<std::string>();
                }
                dets.push_back(std::move(d));
            }
        }
    }

    if (j.contains("scores")) {
        const auto& section = j["scores"];
        if (!section.is_object()) fixture_error("scores", "must be an object keyed by frame index");
        for (const auto& [key, by_anchor] : section.items()) {
            const std::string field = "scores." + key;
            const auto frame = parse_index(key, field);
            if (!by_anchor.is_object()) fixture_error(field, "must be an object keyed by anchor");
            for (const auto& [anchor_name, value] : by_anchor.items()) {
                const auto anchor = parse_anchor(anchor_name);
                if (!anchor) fixture_error(field + "." + anchor_name, "unknown anchor");
                fx.scores[{frame, *anchor}] = raw_reply(value, field + "." + anchor_name);
            }
        }
    }

    if (j.contains("answer")) {
        const auto& a = j["answer"];
        if (a.is_string() || a.is_null()) {
            fx.answer = raw_reply(a, "answer");
        } else if (a.is_object()) {
            for (const auto& [key, _] : a.items()) {
                if (key != "default" && key != "by_image_count" && key != "by_question") {
                    fixture_error("answer." + key, "unknown field");
                }
            }
            fx.answer = a.contains("default") ? raw_reply(a["default"], "answer.default") : std::string{};
            if (a.contains("by_image_count")) {
                for (const auto& [k, v] : a["by_image_count"].items()) {
                    if (!v.is_string()) fixture_error("answer.by_image_count." + k, "must be a string");
                    fx.answer_by_image_count[parse_index(k, "answer.by_image_count")] = v.get<std::string>();
                }
            }
            if (a.contains("by_question")) {
                for (const auto& [k, v] : a["by_question"].items()) {
                    if (!v.is_string()) fixture_error("answer.by_question." + k, "must be a string");
                    fx.answer_by_question[k] = v.get<std::string>();
                }
            }
        } else {
            fixture_error("answer", "must be a string, null or an object");
        }
    } else {
        fx.answer = std::string{};
    }
    return fx;
}

MockFixtures load_mock_fixtures(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::fixture, "cannot read fixture file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::fixture, path.string() + ": " + e.what());
    }
    return parse_mock_fixtures(j);
}

std::vector<TextLineDetection> MockDetector::detect(const FrameImage& frame) {
    ++calls_;
    auto it = fixtures_->detections.find(frame.frame_index);
    if (it == fixtures_->detections.end()) return {};
    return normalize_detections(it->second, frame.width, frame.height);
}

std::string MockScorer::score(const ScoreRequest& request) {
    ++calls_;
    auto it = fixtures_->scores.find({request.frame_index, request.anchor});
    if (it == fixtures_->scores.end()) return {};
    if (!it->second) {
        throw Error(ErrorKind::transport, "mock scorer failure for frame " + std::to_string(request.frame_index) +
                                              " " + std::string(short_name(request.anchor)));
    }
    return *it->second;
}

std::string MockAnswerer::answer(const AnswerRequest& request) {
    ++calls_;
    {
        std::lock_guard lock(mutex_);
        received_.push_back(Received{{request.frames.begin(), request.frames.end()},
                                     std::string(request.prompt),
                                     std::string(request.question)});
    }
    if (auto q = fixtures_->answer_by_question.find(std::string(request.question));
        q != fixtures_->answer_by_question.end()) {
        return q->second;
    }
    if (auto n = fixtures_->answer_by_image_count.find(request.frames.size());
        n != fixtures_->answer_by_image_count.end()) {
        return n->second;
    }
    if (!fixtures_->answer) throw Error(ErrorKind::transport, "mock answerer failure");
    return *fixtures_->answer;
}

std::vector<MockAnswerer::Received> MockAnswerer::received() const {
    std::lock_guard lock(mutex_);
    return received_;
}

MockBackends make_mock_backends(MockFixtures fixtures) {
    auto shared = std::make_shared<const MockFixtures>(std::move(fixtures));
    return MockBackends{std::make_shared<MockDetector>(shared), std::make_shared<MockScorer>(shared),
                        std::make_shared<MockAnswerer>(shared)};
}

}  // namespace sfa
