#include "scenario.hpp"

#include <atomic>
#include <fstream>
#include <random>

#include <unistd.h>

namespace sfa::testing {

namespace fs = std::filesystem;
using nlohmann::json;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

FrameImage synthetic_frame(int width, int height, unsigned seed, const std::vector<Rect>& text) {
    FrameImage img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            auto* p = img.at(x, y);
            p[0] = static_cast<std::uint8_t>((x * 255 / std::max(width - 1, 1) + seed * 37) & 0xFF);
            p[1] = static_cast<std::uint8_t>((y * 255 / std::max(height - 1, 1) + seed * 91) & 0xFF);
            p[2] = static_cast<std::uint8_t>(((x + y) / 3 + seed * 53) & 0xFF);
        }
    }
    for (const auto& r : text) {
        const auto px = rasterize(r, width, height);
        for (int y = px.y0; y < px.y1; ++y) {
            for (int x = px.x0; x < px.x1; ++x) {
                auto* p = img.at(x, y);
                const bool stroke = ((x / 3) + (y / 4)) % 2 == 0;
                p[0] = p[1] = p[2] = stroke ? 16 : 240;
            }
        }
    }
    return img;
}

FrameImage random_image(int width, int height, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> byte(0, 255);
    FrameImage img(width, height);
    for (auto& b : img.pixels) b = static_cast<std::uint8_t>(byte(rng));
    return img;
}

void write_json(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

namespace {

const std::vector<std::vector<Rect>>& poster_text() {
    static const std::vector<std::vector<Rect>> text{
        {},
        {{40, 40, 200, 70}},
        {{350, 20, 450, 50}, {280, 170, 360, 190}},
        {{480, 300, 600, 330}},
        {},
        {},
    };
    return text;
}

json detections_json(const std::vector<std::vector<Rect>>& text) {
    json dets = json::object();
    static const char* words[] = {"HALF", "PRICE", "MANCHESTER", "SALE"};
    for (std::size_t f = 0; f < text.size(); ++f) {
        if (text[f].empty()) continue;
        json list = json::array();
        for (std::size_t i = 0; i < text[f].size(); ++i) {
            const auto& r = text[f][i];
            list.push_back({{"bbox", {r.x0, r.y0, r.x1, r.y1}}, {"confidence", 0.95}, {"text", words[(f + i) % 4]}});
        }
        dets[std::to_string(f)] = list;
    }
    return dets;
}

Scenario write_scenario(const fs::path& root, const std::string& name, const json& fixtures) {
    Scenario s;
    s.frames_dir = root / "poster_frames";
    if (!fs::exists(s.frames_dir / "frames.meta")) write_poster_frames(s.frames_dir);
    s.fixtures_path = root / (name + ".json");
    s.fixtures = fixtures;
    write_json(s.fixtures_path, fixtures);
    return s;
}

}  // namespace

json poster_fixtures() {
    return json{{"detections", detections_json(poster_text())},
                {"scores",
                 {{"1", {{"TL", 0.6}}},
                  {"2", {{"TL", 0.9}, {"TR", 0.5}, {"BL", 0.4}, {"BR", 0.6}}},
                  {"3", {{"BR", "0.55"}}}}},
                {"answer", "half price"}};
}

void write_poster_frames(const fs::path& dir) {
    std::vector<FrameImage> frames;
    for (unsigned i = 0; i < poster_text().size(); ++i) {
        frames.push_back(synthetic_frame(kPosterWidth, kPosterHeight, i + 1, poster_text()[i]));
    }
    write_frame_directory(dir, frames, Rational{1, 1});
}

Scenario make_poster(const fs::path& root) { return write_scenario(root, "poster", poster_fixtures()); }

Scenario make_poster_low_scores(const fs::path& root) {
    json fx = poster_fixtures();
    fx["scores"]["2"]["TL"] = 0.65;
    return write_scenario(root, "poster_low", fx);
}

Scenario make_poster_no_text(const fs::path& root) {
    json fx = poster_fixtures();
    fx["detections"] = json::object();
    return write_scenario(root, "poster_no_text", fx);
}

Scenario make_full_frame(const fs::path& root) {
    Scenario s;
    s.frames_dir = root / "full_frames";
    std::vector<std::vector<Rect>> text;
    std::vector<FrameImage> frames;
    for (unsigned i = 0; i < 4; ++i) {
        text.push_back({{60.0 + 40 * i, 100, 300.0 + 40 * i, 140}});
        frames.push_back(synthetic_frame(kPosterWidth, kPosterHeight, 20 + i, text.back()));
    }
    write_frame_directory(s.frames_dir, frames, Rational{1, 1});
    json scores = json::object();
    for (std::size_t i = 0; i < frames.size(); ++i) scores[std::to_string(i)] = {{"TL", 0.9}};
    s.fixtures = json{{"detections", detections_json(text)}, {"scores", scores}, {"answer", "buy one get one"}};
    s.fixtures_path = root / "full_frame.json";
    write_json(s.fixtures_path, s.fixtures);
    return s;
}

ScenarioRun run_scenario(const Scenario& s, const PipelineConfig& config) {
    auto mocks = make_mock_backends(parse_mock_fixtures(s.fixtures));
    auto result = run_sfa(open_frame_directory(s.frames_dir), "What is on sale?", config, mocks.as_backends());
    return ScenarioRun{std::move(result), std::move(mocks)};
}

std::string result_fingerprint(const AnswerResult& result) {
    auto record = run_record(result);
    record.erase("stats");
    std::string out = record.dump();
    for (const auto& f : result.refined.frames) {
        out += "|" + std::to_string(f.width) + "x" + std::to_string(f.height) + ":";
        out.append(f.pixels.begin(), f.pixels.end());
    }
    return out;
}

fs::path make_eval_manifest(const fs::path& root, const std::string& missing_sample) {
    json fx = poster_fixtures();
    fx["answer"] = {{"default", "no idea"},
                    {"by_question",
                     {{"What is the offer?", "half price"},
                      {"What does the poster say?", "Half Price."},
                      {"Which city is named?", "manchester"},
                      {"Which club is on the banner?", "mancester"}}}};
    write_scenario(root, "eval_fixtures", fx);

    struct Row {
        const char* id;
        const char* question;
        std::vector<std::string> answers;
    };
    const std::vector<Row> rows{
        {"q1", "What is the offer?", {"half price"}},
        {"q2", "What does the poster say?", {"half price"}},
        {"q3", "Which city is named?", {"Manchester", "man city"}},
        {"q4", "Which club is on the banner?", {"manchester"}},
    };
    const fs::path manifest = root / "manifest.jsonl";
    std::ofstream out(manifest);
    for (const auto& r : rows) {
        const bool missing = missing_sample == r.id;
        out << json{{"sample_id", r.id},
                    {"frames_path", missing ? "does_not_exist" : "poster_frames"},
                    {"fps", 1},
                    {"question", r.question},
                    {"answers", r.answers},
                    {"mock_fixtures", "eval_fixtures.json"}}
                   .dump()
            << "\n";
    }
    return manifest;
}

}  // namespace sfa::testing
