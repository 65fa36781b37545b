#include "sfa/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <memory>

#include "parallel.hpp"
#include "sfa/cache.hpp"
#include "sfa/digest.hpp"
#include "sfa/error.hpp"
#include "sfa/focus.hpp"
#include "sfa/scan.hpp"

namespace sfa {

using nlohmann::json;

void PipelineConfig::validate() const {
    validate_alpha(alpha);
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw Error(ErrorKind::configuration, "tau must lie in [0, 1], got " + std::to_string(tau));
    }
    if (!target_fps.positive()) throw Error(ErrorKind::configuration, "fps must be positive, got " + target_fps.str());
    if (max_in_flight < 1) throw Error(ErrorKind::configuration, "max_in_flight must be at least 1");
    if (scorer_retries < 0 || answer_retries < 0) throw Error(ErrorKind::configuration, "retries must be nonnegative");
}

json PipelineConfig::snapshot() const {
    return json{{"alpha", alpha},
                {"tau", tau},
                {"fps", target_fps.str()},
                {"fallback", std::string(to_string(fallback))},
                {"max_in_flight", max_in_flight},
                {"scorer_retries", scorer_retries},
                {"answer_retries", answer_retries},
                {"relevance_prompt_sha256", sha256_hex(relevance_prompt.text)},
                {"answer_prompt_sha256", sha256_hex(answer_prompt.text)},
                {"cache_dir", cache_dir ? json(cache_dir->string()) : json(nullptr)}};
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

class CountingScorer final : public ScorerBackend {
public:
    explicit CountingScorer(ScorerBackend& inner) : inner_(inner) {}
    std::string score(const ScoreRequest& r) override {
        ++calls;
        return inner_.score(r);
    }
    std::string model_name() const override { return inner_.model_name(); }
    std::atomic<std::size_t> calls{0};

private:
    ScorerBackend& inner_;
};

class CountingAnswerer final : public AnswererBackend {
public:
    explicit CountingAnswerer(AnswererBackend& inner) : inner_(inner) {}
    std::string answer(const AnswerRequest& r) override {
        ++calls;
        return inner_.answer(r);
    }
    std::string model_name() const override { return inner_.model_name(); }
    std::atomic<std::size_t> calls{0};

private:
    AnswererBackend& inner_;
};

// Serves answers from the cache; only successful replies are stored.
class CachingAnswerer final : public AnswererBackend {
public:
    CachingAnswerer(AnswererBackend& inner, const ResultCache* cache) : inner_(inner), cache_(cache) {}
    std::string answer(const AnswerRequest& r) override {
        if (!cache_) return inner_.answer(r);
        const auto key = answer_cache_key(r.frames, r.question, inner_.model_name(), r.prompt);
        if (auto hit = cache_->get(CacheStage::answers, key, &warnings); hit && hit->is_string()) {
            hit_ = true;
            return hit->get<std::string>();
        }
        auto reply = inner_.answer(r);
        cache_->put(CacheStage::answers, key, reply);
        return reply;
    }
    std::string model_name() const override { return inner_.model_name(); }
    bool hit() const noexcept { return hit_; }
    std::vector<std::string> warnings;

private:
    AnswererBackend& inner_;
    const ResultCache* cache_;
    bool hit_ = false;
};

template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        if (!e.stage().empty()) throw;
        throw e.at_stage(stage);
    }
}

void require_question(std::string_view question) {
    if (question.empty()) throw Error(ErrorKind::argument, "question is empty", "config");
}

struct FrameWork {
    std::vector<TextLineDetection> detections;
    bool failed = false;
    bool cache_hit = false;
    std::vector<std::string> warnings;
    std::vector<CandidateRegion> candidates;
};

struct ScoreWork {
    std::size_t frame_slot = 0;
    const CandidateRegion* region = nullptr;
    RelevanceScore score;
    bool cache_hit = false;
    std::vector<std::string> warnings;
};

}  // namespace

AnswerResult run_sfa_on_frames(std::vector<FrameImage> sampled, std::string_view question,
                               const PipelineConfig& config, const Backends& backends) {
    staged("config", [&] { config.validate(); });
    require_question(question);
    if (!backends.detector || !backends.scorer || !backends.answerer) {
        throw Error(ErrorKind::configuration, "all three backends are required", "config");
    }
    if (sampled.empty()) throw Error(ErrorKind::empty_video, "no sampled frames", "sample");

    std::unique_ptr<ResultCache> cache;
    if (config.cache_dir) cache = std::make_unique<ResultCache>(*config.cache_dir);

    RunStats stats;
    Trace trace;
    trace.mode = "sfa";
    trace.question = std::string(question);
    trace.alpha = config.alpha;
    trace.tau = config.tau;
    trace.fps = config.target_fps.str();

    // Detect.
    auto t0 = Clock::now();
    std::vector<FrameWork> work(sampled.size());
    std::atomic<std::size_t> detector_calls{0};
    const std::string detector_model = backends.detector->model_name();
    detail::parallel_for(sampled.size(), config.max_in_flight, [&](std::size_t i) {
        const FrameImage& frame = sampled[i];
        FrameWork& w = work[i];
        std::string key;
        if (cache) {
            key = detection_cache_key(frame, detector_model);
            if (auto hit = cache->get(CacheStage::detections, key, &w.warnings)) {
                try {
                    for (const auto& d : *hit) w.detections.push_back(detection_from_trace_json(d));
                    w.cache_hit = true;
                    return;
                } catch (const std::exception&) {
                    w.detections.clear();
                    w.warnings.push_back("corrupt cache entry for frame " + std::to_string(frame.frame_index) +
                                         " ignored");
                }
            }
        }
        try {
            ++detector_calls;
            w.detections = normalize_detections(backends.detector->detect(frame), frame.width, frame.height);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::transport && e.kind() != ErrorKind::protocol &&
                e.kind() != ErrorKind::detection) {
                throw e.stage().empty() ? e.at_stage("detect") : e;
            }
            w.failed = true;
            w.detections.clear();
            w.warnings.push_back("detection failed for frame " + std::to_string(frame.frame_index) +
                                 "; treated as text-free: " + e.what());
            return;
        }
        if (cache) {
            json value = json::array();
            for (const auto& d : w.detections) value.push_back(to_json(d));
            cache->put(CacheStage::detections, key, value);
        }
    });
    stats.timing_ms["detect"] = ms_since(t0);
    stats.detector_calls = detector_calls;

    // Scan.
    t0 = Clock::now();
    std::vector<std::size_t> text_bearing;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        if (!work[i].detections.empty()) text_bearing.push_back(sampled[i].frame_index);
    }
    staged("scan", [&] {
        detail::parallel_for(sampled.size(), config.max_in_flight, [&](std::size_t i) {
            work[i].candidates = scan_frame(sampled[i], work[i].detections, config.alpha);
        });
    });
    stats.timing_ms["scan"] = ms_since(t0);

    // Focus: score every candidate, then select per frame.
    t0 = Clock::now();
    std::vector<ScoreWork> scoring;
    for (std::size_t i = 0; i < work.size(); ++i) {
        for (const auto& c : work[i].candidates) scoring.push_back(ScoreWork{i, &c, {}, false, {}});
    }
    CountingScorer scorer(*backends.scorer);
    const std::string scorer_model = backends.scorer->model_name();
    staged("focus", [&] {
        detail::parallel_for(scoring.size(), config.max_in_flight, [&](std::size_t k) {
            ScoreWork& s = scoring[k];
            std::string key;
            if (cache) {
                key = score_cache_key(s.region->normalized_image, question, scorer_model, config.relevance_prompt);
                if (auto hit = cache->get(CacheStage::scores, key, &s.warnings)) {
                    try {
                        s.score = score_from_json(*hit);
                        s.cache_hit = true;
                        return;
                    } catch (const std::exception&) {
                        s.warnings.push_back("corrupt score cache entry ignored");
                    }
                }
            }
            s.score = score_window(*s.region, question, scorer, config.relevance_prompt, config.scorer_retries).score;
            // Failed calls are not cached so a later run can retry them.
            if (cache && s.score.note.empty()) cache->put(CacheStage::scores, key, to_json(s.score));
        });
    });
    stats.scorer_calls = scorer.calls;

    std::vector<KeyRegion> keys;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
        const FrameImage& frame = sampled[i];
        FrameTrace ft;
        ft.frame_index = frame.frame_index;
        ft.source_index = frame.source_index;
        ft.timestamp = frame.timestamp;
        ft.detections = work[i].detections;
        ft.detection_failed = work[i].failed;
        for (auto& wmsg : work[i].warnings) trace.warnings.push_back(std::move(wmsg));
        stats.cache_hits += work[i].cache_hit ? 1 : 0;
        stats.cache_misses += (cache && !work[i].cache_hit) ? 1 : 0;

        std::vector<ScoredWindow> scored;
        for (; cursor < scoring.size() && scoring[cursor].frame_slot == i; ++cursor) {
            ScoreWork& s = scoring[cursor];
            for (auto& wmsg : s.warnings) trace.warnings.push_back(std::move(wmsg));
            if (!s.score.note.empty()) {
                trace.warnings.push_back("scorer failed for frame " + std::to_string(frame.frame_index) + " " +
                                         std::string(short_name(s.region->window.anchor)) + ": " + s.score.note);
            }
            stats.cache_hits += s.cache_hit ? 1 : 0;
            stats.cache_misses += (cache && !s.cache_hit) ? 1 : 0;
            ft.windows.push_back(
                WindowTrace{s.region->window, config.alpha, s.region->contained_line_ids, s.score});
            scored.push_back(ScoredWindow{*s.region, s.score});
        }
        if (auto key = select_key_region(scored, config.tau)) {
            ft.selected = key->region.window.anchor;
            ft.selected_score = key->score;
            keys.push_back(std::move(*key));
        }
        trace.frames.push_back(std::move(ft));
    }
    stats.timing_ms["focus"] = ms_since(t0);

    // Amplify.
    t0 = Clock::now();
    RefinedVideo refined =
        staged("amplify", [&] { return assemble_refined_video(keys, sampled, text_bearing, config.fallback); });
    stats.timing_ms["amplify"] = ms_since(t0);

    // Answer.
    t0 = Clock::now();
    CountingAnswerer answerer(*backends.answerer);
    CachingAnswerer cached(answerer, cache.get());
    AnswerResult result = staged("answer", [&] {
        return answer(refined, question, cached, config.answer_prompt, config.answer_retries, std::move(trace));
    });
    for (auto& wmsg : cached.warnings) result.trace.warnings.push_back(std::move(wmsg));
    stats.timing_ms["answer"] = ms_since(t0);
    stats.answerer_calls = answerer.calls;
    if (cache) (cached.hit() ? stats.cache_hits : stats.cache_misses) += 1;
    result.stats = std::move(stats);
    return result;
}

AnswerResult run_sfa(const FrameSource& source, std::string_view question, const PipelineConfig& config,
                     const Backends& backends) {
    staged("config", [&] { config.validate(); });
    require_question(question);
    const auto t0 = Clock::now();
    auto sampled = staged("sample", [&] { return sample_frames(source, config.target_fps); });
    const double sample_ms = ms_since(t0);
    auto result = run_sfa_on_frames(std::move(sampled), question, config, backends);
    result.stats.timing_ms["sample"] = sample_ms;
    return result;
}

AnswerResult run_baseline(const FrameSource& source, std::string_view question, const PipelineConfig& config,
                          AnswererBackend& answerer) {
    staged("config", [&] { config.validate(); });
    require_question(question);
    RunStats stats;
    auto t0 = Clock::now();
    auto sampled = staged("sample", [&] { return sample_frames(source, config.target_fps); });
    if (sampled.empty()) throw Error(ErrorKind::empty_video, "no sampled frames", "sample");
    stats.timing_ms["sample"] = ms_since(t0);

    RefinedVideo video;
    for (const auto& f : sampled) {
        video.provenance.push_back(FrameProvenance{f.frame_index, f.source_index, {}, {}, {}});
    }
    video.frames = std::move(sampled);

    Trace trace;
    trace.mode = "baseline";
    trace.question = std::string(question);
    trace.alpha = config.alpha;
    trace.tau = config.tau;
    trace.fps = config.target_fps.str();

    std::unique_ptr<ResultCache> cache;
    if (config.cache_dir) cache = std::make_unique<ResultCache>(*config.cache_dir);

    t0 = Clock::now();
    CountingAnswerer counting(answerer);
    CachingAnswerer cached(counting, cache.get());
    AnswerResult result = staged("answer", [&] {
        return answer(video, question, cached, config.answer_prompt, config.answer_retries, std::move(trace));
    });
    for (auto& wmsg : cached.warnings) result.trace.warnings.push_back(std::move(wmsg));
    stats.timing_ms["answer"] = ms_since(t0);
    stats.answerer_calls = counting.calls;
    if (cache) (cached.hit() ? stats.cache_hits : stats.cache_misses) += 1;
    result.stats = std::move(stats);
    return result;
}

std::vector<std::optional<Anchor>> reselect_from_trace(const Trace& trace, double tau) {
    std::vector<std::optional<Anchor>> out;
    for (const auto& f : trace.frames) {
        std::vector<Anchor> anchors;
        std::vector<double> values;
        for (const auto& w : f.windows) {
            anchors.push_back(w.window.anchor);
            values.push_back(w.score ? w.score->value : 0.0);
        }
        const auto best = select_key_index(anchors, values, tau);
        out.push_back(best ? std::optional<Anchor>(anchors[*best]) : std::nullopt);
    }
    return out;
}

json run_record(const AnswerResult& result) {
    json provenance = json::array();
    for (const auto& p : result.refined.provenance) {
        provenance.push_back(json{{"frame_index", p.frame_index},
                                  {"source_index", p.source_index},
                                  {"anchor", p.anchor ? json(std::string(to_string(*p.anchor))) : json(nullptr)},
                                  {"rect", p.rect ? to_json(*p.rect) : json(nullptr)},
                                  {"score", p.score ? json(*p.score) : json(nullptr)}});
    }
    return json{{"answer", result.answer},
                {"fallback_used", result.refined.fallback_used},
                {"refined", provenance},
                {"trace", to_json(result.trace)},
                {"stats", to_json(result.stats)}};
}

void write_run_trace(const AnswerResult& result, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << run_record(result).dump(2) << "\n";
    if (!out) throw Error(ErrorKind::source, "cannot write trace file " + path.string());
}

}  // namespace sfa
