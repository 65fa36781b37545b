#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfa/media.hpp"
#include "sfa/prompt.hpp"
#include "sfa/scan.hpp"

namespace sfa {

// ---------------------------------------------------------------------------
// Backend contracts

class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    /// Detections clipped to the frame and sorted by (y0, x0).
    virtual std::vector<TextLineDetection> detect(const FrameImage& frame) = 0;
    virtual std::string model_name() const = 0;
};

struct ScoreRequest {
    const FrameImage& image;  // normalized window raster
    std::string_view prompt;
    std::size_t frame_index = 0;
    Anchor anchor = Anchor::top_left;
};

class ScorerBackend {
public:
    virtual ~ScorerBackend() = default;
    /// Raw reply text; interpretation is up to parse_score.
    virtual std::string score(const ScoreRequest& request) = 0;
    virtual std::string model_name() const = 0;
};

struct AnswerRequest {
    std::span<const FrameImage> frames;
    std::string_view prompt;
    std::string_view question;
};

class AnswererBackend {
public:
    virtual ~AnswererBackend() = default;
    virtual std::string answer(const AnswerRequest& request) = 0;
    virtual std::string model_name() const = 0;
};

struct Backends {
    std::shared_ptr<DetectorBackend> detector;
    std::shared_ptr<ScorerBackend> scorer;
    std::shared_ptr<AnswererBackend> answerer;
};

/// Clip to bounds, drop empty boxes, sort by (y0, x0).
std::vector<TextLineDetection> normalize_detections(std::vector<TextLineDetection> dets, int frame_w, int frame_h);

// ---------------------------------------------------------------------------
// OpenAI-compatible vision chat transport

struct EndpointConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key_env;  // name of the variable holding the key, never the key
    double timeout_s = 120.0;
    int max_retries = 2;
    int max_in_flight = 4;
    int max_tokens = 256;
    double backoff_initial_s = 0.5;

    void validate() const;
};

EndpointConfig endpoint_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EndpointConfig& config);

struct HttpResponse {
    int status = 0;  // 0 means the connection itself failed
    std::string body;
};

class HttpTransport {
public:
    using Headers = std::vector<std::pair<std::string, std::string>>;
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url, const Headers& headers, const std::string& body,
                              double timeout_s) = 0;
};

/// cpp-httplib backed transport (http and https).
std::shared_ptr<HttpTransport> make_http_transport();

struct ChatDecoding {
    double temperature = 0.0;
    int max_tokens = 256;
};

/// Single user message: one image_url part per image (PNG data URLs, in
/// order) followed by one text part.
nlohmann::json build_chat_request(std::string_view model, std::span<const std::vector<std::uint8_t>> png_images,
                                  std::string_view text, const ChatDecoding& decoding);

/// Text of the first choice. Accepts string content or an array of text parts.
std::string parse_chat_response(std::string_view body);

/// Counting gate shared by every request sent through one client.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int limit);
    void acquire();
    void release();
    int limit() const noexcept { return limit_; }

private:
    int limit_;
    std::counting_semaphore<4096> slots_;
};

class VisionChatClient {
public:
    VisionChatClient(EndpointConfig config, std::shared_ptr<HttpTransport> transport);

    std::string complete(std::span<const std::vector<std::uint8_t>> png_images, std::string_view text);

    const EndpointConfig& config() const noexcept { return config_; }

private:
    EndpointConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    InFlightLimiter limiter_;
};

/// One-shot form of VisionChatClient::complete with explicit decoding.
std::string chat_vision(const EndpointConfig& config, std::span<const std::vector<std::uint8_t>> png_images,
                        std::string_view text, const ChatDecoding& decoding, HttpTransport& transport);

/// Parses a detector reply: JSON lines (or one JSON array) of objects with
/// `bbox` [x0,y0,x1,y1], `polygon` [[x,y],...] or flat `points`, plus
/// optional `confidence` and `text`. Polygons reduce to their bounding box.
std::vector<TextLineDetection> parse_detection_reply(std::string_view reply);

class LiveDetector final : public DetectorBackend {
public:
    LiveDetector(std::shared_ptr<VisionChatClient> client, PromptTemplate prompt = PromptTemplate::default_detection());
    std::vector<TextLineDetection> detect(const FrameImage& frame) override;
    std::string model_name() const override { return client_->config().model_name; }

private:
    std::shared_ptr<VisionChatClient> client_;
    PromptTemplate prompt_;
};

class LiveScorer final : public ScorerBackend {
public:
    explicit LiveScorer(std::shared_ptr<VisionChatClient> client) : client_(std::move(client)) {}
    std::string score(const ScoreRequest& request) override;
    std::string model_name() const override { return client_->config().model_name; }

private:
    std::shared_ptr<VisionChatClient> client_;
};

class LiveAnswerer final : public AnswererBackend {
public:
    explicit LiveAnswerer(std::shared_ptr<VisionChatClient> client) : client_(std::move(client)) {}
    std::string answer(const AnswerRequest& request) override;
    std::string model_name() const override { return client_->config().model_name; }

private:
    std::shared_ptr<VisionChatClient> client_;
};

struct LiveEndpoints {
    EndpointConfig detector;
    EndpointConfig scorer;
    EndpointConfig answerer;
};

Backends make_live_backends(const LiveEndpoints& endpoints, std::shared_ptr<HttpTransport> transport = nullptr);

// ---------------------------------------------------------------------------
// Fixture mocks

struct MockFixtures {
    std::map<std::size_t, std::vector<TextLineDetection>> detections;
    /// Raw scorer reply per (frame index, anchor); nullopt simulates a
    /// transport failure.
    std::map<std::pair<std::size_t, Anchor>, std::optional<std::string>> scores;
    std::optional<std::string> answer;  // nullopt simulates a transport failure
    std::map<std::size_t, std::string> answer_by_image_count;
    std::map<std::string, std::string> answer_by_question;
};

MockFixtures parse_mock_fixtures(const nlohmann::json& j);
MockFixtures load_mock_fixtures(const std::filesystem::path& path);

class MockDetector final : public DetectorBackend {
public:
    explicit MockDetector(std::shared_ptr<const MockFixtures> fixtures) : fixtures_(std::move(fixtures)) {}
    std::vector<TextLineDetection> detect(const FrameImage& frame) override;
    std::string model_name() const override { return "mock-detector"; }
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::shared_ptr<const MockFixtures> fixtures_;
    std::atomic<std::size_t> calls_{0};
};

class MockScorer final : public ScorerBackend {
public:
    explicit MockScorer(std::shared_ptr<const MockFixtures> fixtures) : fixtures_(std::move(fixtures)) {}
    std::string score(const ScoreRequest& request) override;
    std::string model_name() const override { return "mock-scorer"; }
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::shared_ptr<const MockFixtures> fixtures_;
    std::atomic<std::size_t> calls_{0};
};

class MockAnswerer final : public AnswererBackend {
public:
    struct Received {
        std::vector<FrameImage> frames;
        std::string prompt;
        std::string question;
    };

    explicit MockAnswerer(std::shared_ptr<const MockFixtures> fixtures) : fixtures_(std::move(fixtures)) {}
    std::string answer(const AnswerRequest& request) override;
    std::string model_name() const override { return "mock-answerer"; }
    std::size_t calls() const noexcept { return calls_.load(); }
    std::vector<Received> received() const;

private:
    std::shared_ptr<const MockFixtures> fixtures_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex mutex_;
    std::vector<Received> received_;
};

struct MockBackends {
    std::shared_ptr<MockDetector> detector;
    std::shared_ptr<MockScorer> scorer;
    std::shared_ptr<MockAnswerer> answerer;

    Backends as_backends() const { return Backends{detector, scorer, answerer}; }
    std::size_t total_calls() const { return detector->calls() + scorer->calls() + answerer->calls(); }
};

MockBackends make_mock_backends(MockFixtures fixtures);

}  // namespace sfa
