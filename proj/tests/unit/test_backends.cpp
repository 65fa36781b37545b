#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "scenario.hpp"
#include "sfa/backends.hpp"
#include "sfa/digest.hpp"
#include "sfa/error.hpp"

namespace sfa {
namespace {

using nlohmann::json;

struct Recorded {
    std::string url;
    HttpTransport::Headers headers;
    std::string body;
};

// Replays canned responses in order and records every request.
class RecordingTransport final : public HttpTransport {
public:
    explicit RecordingTransport(std::vector<HttpResponse> replies) : replies_(std::move(replies)) {}
    HttpResponse post(const std::string& url, const Headers& headers, const std::string& body, double) override {
        std::lock_guard lock(mutex_);
        requests.push_back({url, headers, body});
        if (next_ >= replies_.size()) return replies_.back();
        return replies_[next_++];
    }
    std::vector<Recorded> requests;

private:
    std::mutex mutex_;
    std::vector<HttpResponse> replies_;
    std::size_t next_ = 0;
};

std::string chat_reply(const std::string& text) {
    return json{{"choices", json::array({json{{"message", {{"role", "assistant"}, {"content", text}}}}})}}.dump();
}

EndpointConfig endpoint(const std::string& url = "http://vlm.local/v1/") {
    EndpointConfig c;
    c.base_url = url;
    c.model_name = "qwen-vl";
    c.max_retries = 1;
    c.backoff_initial_s = 0.0;
    c.max_tokens = 32;
    return c;
}

TEST(Base64, KnownVectors) {
    auto enc = [](std::string s) {
        return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    };
    EXPECT_EQ(enc(""), "");
    EXPECT_EQ(enc("f"), "Zg==");
    EXPECT_EQ(enc("fo"), "Zm8=");
    EXPECT_EQ(enc("foo"), "Zm9v");
    EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
}

TEST(Digest, KnownVectorAndFraming) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto h1 = Digest().add("ab").add("c").hex();
    const auto h2 = Digest().add("a").add("bc").hex();
    EXPECT_NE(h1, h2);
    EXPECT_EQ(h1, Digest().add("ab").add("c").hex());
}

TEST(ChatRequest, ShapeAndOrder) {
    const std::vector<std::vector<std::uint8_t>> images{{1, 2, 3}, {4}};
    const auto j = build_chat_request("m", images, "hello", ChatDecoding{0.0, 64});
    EXPECT_EQ(j["model"], "m");
    EXPECT_EQ(j["temperature"], 0.0);
    EXPECT_EQ(j["max_tokens"], 64);
    ASSERT_EQ(j["messages"].size(), 1u);
    EXPECT_EQ(j["messages"][0]["role"], "user");
    const auto& content = j["messages"][0]["content"];
    ASSERT_EQ(content.size(), 3u);
    EXPECT_EQ(content[0]["type"], "image_url");
    EXPECT_EQ(content[0]["image_url"]["url"], "data:image/png;base64,AQID");
    EXPECT_EQ(content[1]["image_url"]["url"], "data:image/png;base64,BA==");
    EXPECT_EQ(content[2]["type"], "text");
    EXPECT_EQ(content[2]["text"], "hello");
}

TEST(ChatResponse, ParsesStringAndPartsAndRejectsGarbage) {
    EXPECT_EQ(parse_chat_response(chat_reply("0.9")), "0.9");
    const json parts{{"choices", json::array({json{
                                     {"message", {{"content", json::array({json{{"type", "text"}, {"text", "a"}},
                                                                           json{{"type", "text"}, {"text", "b"}}})}}}}})}};
    EXPECT_EQ(parse_chat_response(parts.dump()), "ab");
    for (std::string bad : {"not json", "{}", R"({"choices": []})", R"({"choices":[{"message":{"content":5}}]})"}) {
        try {
            parse_chat_response(bad);
            FAIL() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::protocol) << bad;
        }
    }
}

TEST(VisionChatClient, PostsToCompletionsWithDeterministicDecoding) {
    auto transport = std::make_shared<RecordingTransport>(std::vector<HttpResponse>{{200, chat_reply("Score: 0.8")}});
    VisionChatClient client(endpoint(), transport);
    const std::vector<std::vector<std::uint8_t>> images{encode_image(testing::synthetic_frame(4, 4, 1))};
    EXPECT_EQ(client.complete(images, "rate it"), "Score: 0.8");
    ASSERT_EQ(transport->requests.size(), 1u);
    EXPECT_EQ(transport->requests[0].url, "http://vlm.local/v1/chat/completions");
    const auto body = json::parse(transport->requests[0].body);
    EXPECT_EQ(body["model"], "qwen-vl");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["max_tokens"], 32);
    EXPECT_EQ(body["messages"][0]["content"].size(), 2u);
}

TEST(VisionChatClient, RetriesServerErrorThenSucceeds) {
    auto transport = std::make_shared<RecordingTransport>(
        std::vector<HttpResponse>{{500, "overloaded"}, {200, chat_reply("fine")}});
    VisionChatClient client(endpoint(), transport);
    EXPECT_EQ(client.complete({}, "x"), "fine");
    EXPECT_EQ(transport->requests.size(), 2u);
}

TEST(VisionChatClient, GivesUpWithTransportErrorCarryingStatus) {
    auto transport = std::make_shared<RecordingTransport>(std::vector<HttpResponse>{{503, "try later"}});
    VisionChatClient client(endpoint(), transport);
    try {
        client.complete({}, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
        EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("try later"), std::string::npos);
    }
    EXPECT_EQ(transport->requests.size(), 2u);
}

TEST(VisionChatClient, BearerHeaderComesFromNamedVariable) {
    ::setenv("SFA_TEST_KEY", "sk-test", 1);
    auto cfg = endpoint();
    cfg.api_key_env = "SFA_TEST_KEY";
    auto transport = std::make_shared<RecordingTransport>(std::vector<HttpResponse>{{200, chat_reply("ok")}});
    VisionChatClient(cfg, transport).complete({}, "x");
    const auto& h = transport->requests[0].headers;
    EXPECT_NE(std::find(h.begin(), h.end(), std::pair<std::string, std::string>{"Authorization", "Bearer sk-test"}),
              h.end());
    ::unsetenv("SFA_TEST_KEY");

    auto bare = std::make_shared<RecordingTransport>(std::vector<HttpResponse>{{200, chat_reply("ok")}});
    VisionChatClient(cfg, bare).complete({}, "x");
    for (const auto& [k, v] : bare->requests[0].headers) EXPECT_NE(k, "Authorization");
}

// Counts overlapping calls.
class GateTransport final : public HttpTransport {
public:
    HttpResponse post(const std::string&, const Headers&, const std::string&, double) override {
        const int now = ++active;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return {200, chat_reply("0.5")};
    }
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
};

TEST(VisionChatClient, NeverExceedsMaxInFlight) {
    for (int limit : {1, 3}) {
        auto cfg = endpoint();
        cfg.max_in_flight = limit;
        auto transport = std::make_shared<GateTransport>();
        VisionChatClient client(cfg, transport);
        std::vector<std::jthread> threads;
        for (int t = 0; t < 12; ++t) {
            threads.emplace_back([&] {
                for (int i = 0; i < 3; ++i) client.complete({}, "x");
            });
        }
        threads.clear();
        EXPECT_LE(transport->peak.load(), limit);
        EXPECT_GE(transport->peak.load(), 1);
    }
}

TEST(EndpointConfig, RejectsLiteralKeyAndBadValues) {
    try {
        endpoint_from_json(json{{"base_url", "http://x"}, {"model_name", "m"}, {"api_key", "sk-123"}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
    }
    const auto c = endpoint_from_json(json{{"base_url", "http://x"}, {"model", "m"}, {"api_key_env", "K"}});
    EXPECT_EQ(c.model_name, "m");
    EXPECT_EQ(c.api_key_env, "K");
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.max_in_flight = 0;
    EXPECT_THROW(bad.validate(), Error);
    EXPECT_THROW(EndpointConfig{}.validate(), Error);
}

TEST(DetectionReply, AcceptsLinesArraysPolygonsAndFences) {
    const auto lines = parse_detection_reply(
        "```json\n{\"bbox\": [1, 2, 30, 12], \"confidence\": 0.8, \"text\": \"SALE\"}\n"
        "{\"polygon\": [[5, 40], [50, 38], [52, 60], [4, 61]]}\n```\n");
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0].bbox, (Rect{1, 2, 30, 12}));
    EXPECT_EQ(lines[0].transcription, "SALE");
    EXPECT_EQ(lines[1].bbox, (Rect{4, 38, 52, 61}));

    const auto arr = parse_detection_reply(R"([{"points": [0, 0, 10, 0, 10, 5, 0, 5]}])");
    ASSERT_EQ(arr.size(), 1u);
    EXPECT_EQ(arr[0].bbox, (Rect{0, 0, 10, 5}));
    EXPECT_TRUE(parse_detection_reply("").empty());
    EXPECT_THROW(parse_detection_reply("I see some text"), Error);
}

TEST(NormalizeDetections, ClipsDropsAndSorts) {
    std::vector<TextLineDetection> dets{{Rect{50, 20, 90, 30}, 1.0, "b"},
                                        {Rect{10, 20, 40, 30}, 1.0, "a"},
                                        {Rect{-20, 5, 200, 10}, 1.0, "top"},
                                        {Rect{150, 5, 160, 10}, 1.0, "gone"}};
    const auto out = normalize_detections(dets, 100, 50);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].transcription, "top");
    EXPECT_EQ(out[0].bbox, (Rect{0, 5, 100, 10}));
    EXPECT_EQ(out[1].transcription, "a");
    EXPECT_EQ(out[2].transcription, "b");
}

TEST(MockFixtures, ParseAndServe) {
    const auto fx = parse_mock_fixtures(json::parse(R"({
        "description": "tiny",
        "detections": {"1": [{"bbox": [0, 0, 10, 10], "confidence": 0.5}]},
        "scores": {"1": {"TL": 0.9, "top_right": "Score: 0.4", "BL": null}},
        "answer": {"default": "42", "by_question": {"who?": "me"}, "by_image_count": {"2": "pair"}}
    })"));
    auto mocks = make_mock_backends(fx);
    FrameImage f = testing::synthetic_frame(20, 20, 1);
    f.frame_index = 1;
    EXPECT_EQ(mocks.detector->detect(f).size(), 1u);
    f.frame_index = 0;
    EXPECT_TRUE(mocks.detector->detect(f).empty());

    EXPECT_EQ(mocks.scorer->score(ScoreRequest{f, "p", 1, Anchor::top_left}), "0.9");
    EXPECT_EQ(mocks.scorer->score(ScoreRequest{f, "p", 1, Anchor::top_right}), "Score: 0.4");
    EXPECT_EQ(mocks.scorer->score(ScoreRequest{f, "p", 1, Anchor::bottom_right}), "");
    try {
        mocks.scorer->score(ScoreRequest{f, "p", 1, Anchor::bottom_left});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
    }

    std::vector<FrameImage> one{f}, two{f, f};
    EXPECT_EQ(mocks.answerer->answer(AnswerRequest{one, "p", "who?"}), "me");
    EXPECT_EQ(mocks.answerer->answer(AnswerRequest{two, "p", "q"}), "pair");
    EXPECT_EQ(mocks.answerer->answer(AnswerRequest{one, "p", "q"}), "42");
    EXPECT_EQ(mocks.total_calls(), 2u + 4u + 3u);
    EXPECT_EQ(mocks.answerer->received().size(), 3u);
    EXPECT_EQ(mocks.answerer->received()[1].frames.size(), 2u);
}

TEST(MockFixtures, SchemaErrorsNameTheField) {
    struct Case {
        const char* text;
        const char* field;
    };
    const std::vector<Case> cases{
        {R"({"detections": {"x": []}})", "detections.x"},
        {R"({"detections": {"0": [{"bbox": [1, 2, 3]}]}})", "detections.0[0].bbox"},
        {R"({"detections": {"0": [{"bbox": [5, 0, 1, 4]}]}})", "detections.0[0].bbox"},
        {R"({"detections": {"0": [{"bbox": [0, 0, 1, 1], "confidence": 2}]}})", "detections.0[0].confidence"},
        {R"({"scores": {"0": {"middle": 0.5}}})", "scores.0.middle"},
        {R"({"scores": {"0": {"TL": [1]}}})", "scores.0.TL"},
        {R"({"answer": 5})", "answer"},
        {R"({"extra": 1})", "extra"},
    };
    for (const auto& c : cases) {
        try {
            parse_mock_fixtures(json::parse(c.text));
            FAIL() << c.text;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::fixture);
            EXPECT_NE(std::string(e.what()).find(std::string("'") + c.field + "'"), std::string::npos) << e.what();
        }
    }
}

TEST(MockFixtures, LoadErrors) {
    testing::TempDir dir;
    EXPECT_THROW(load_mock_fixtures(dir / "absent.json"), Error);
    {
        std::ofstream(dir / "broken.json") << "{ nope";
    }
    try {
        load_mock_fixtures(dir / "broken.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::fixture);
    }
}

TEST(HttpTransport, RoundTripAgainstLocalServer) {
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(chat_reply("{\"bbox\": [1, 1, 5, 5]}"), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread runner([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("SFA_TEST_KEY2", "secret", 1);
    auto cfg = endpoint("http://127.0.0.1:" + std::to_string(port) + "/v1");
    cfg.api_key_env = "SFA_TEST_KEY2";
    LiveEndpoints eps{cfg, cfg, cfg};
    auto backends = make_live_backends(eps);
    auto frame = testing::synthetic_frame(8, 8, 2);
    const auto dets = backends.detector->detect(frame);
    server.stop();
    runner.join();
    ::unsetenv("SFA_TEST_KEY2");

    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].bbox, (Rect{1, 1, 5, 5}));
    EXPECT_EQ(seen_auth, "Bearer secret");
    EXPECT_EQ(json::parse(seen_body)["model"], "qwen-vl");
}

TEST(HttpTransport, UnreachableHostIsTransportError) {
    auto cfg = endpoint("http://127.0.0.1:1/v1");
    cfg.timeout_s = 1.0;
    cfg.max_retries = 0;
    VisionChatClient client(cfg, make_http_transport());
    try {
        client.complete({}, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::transport);
    }
}

}  // namespace
}  // namespace sfa
