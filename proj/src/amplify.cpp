#include "sfa/amplify.hpp"

#include <algorithm>
#include <cctype>

#include "sfa/error.hpp"

namespace sfa {

std::string_view to_string(FallbackPolicy policy) noexcept {
    switch (policy) {
        case FallbackPolicy::cascade: return "cascade";
        case FallbackPolicy::sampled_frames: return "sampled_frames";
        case FallbackPolicy::none: return "none";
    }
    return "?";
}

FallbackPolicy parse_fallback_policy(std::string_view text) {
    for (auto p : {FallbackPolicy::cascade, FallbackPolicy::sampled_frames, FallbackPolicy::none}) {
        if (text == to_string(p)) return p;
    }
    throw Error(ErrorKind::configuration, "unknown fallback policy '" + std::string(text) + "'");
}

std::string trim_whitespace(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

FrameImage amplify_region(const FrameImage& original_frame, const KeyRegion& key) {
    return resize(crop(original_frame, key.region.window.rect), original_frame.width, original_frame.height);
}

namespace {

const FrameImage& lookup(std::span<const FrameImage> sampled, std::size_t frame_index) {
    if (frame_index < sampled.size() && sampled[frame_index].frame_index == frame_index) return sampled[frame_index];
    auto it = std::find_if(sampled.begin(), sampled.end(),
                           [&](const FrameImage& f) { return f.frame_index == frame_index; });
    if (it == sampled.end()) {
        throw Error(ErrorKind::argument, "key region refers to unknown frame " + std::to_string(frame_index));
    }
    return *it;
}

void push_original(RefinedVideo& video, const FrameImage& frame) {
    video.frames.push_back(frame);
    video.provenance.push_back(FrameProvenance{frame.frame_index, frame.source_index, {}, {}, {}});
}

}  // namespace

RefinedVideo assemble_refined_video(std::span<const KeyRegion> keys, std::span<const FrameImage> sampled,
                                    std::span<const std::size_t> text_bearing, FallbackPolicy fallback) {
    if (sampled.empty()) throw Error(ErrorKind::empty_video, "no sampled frames to assemble");
    RefinedVideo video;
    if (!keys.empty()) {
        std::vector<const KeyRegion*> ordered;
        for (const auto& k : keys) ordered.push_back(&k);
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const KeyRegion* a, const KeyRegion* b) { return a->frame_index < b->frame_index; });
        for (const KeyRegion* key : ordered) {
            const FrameImage& original = lookup(sampled, key->frame_index);
            video.frames.push_back(amplify_region(original, *key));
            video.provenance.push_back(FrameProvenance{key->frame_index, original.source_index,
                                                       key->region.window.anchor, key->region.window.rect,
                                                       key->score});
        }
        return video;
    }

    if (fallback == FallbackPolicy::none) {
        throw Error(ErrorKind::empty_video, "no frame produced a key region and fallback is disabled");
    }
    video.fallback_used = true;
    if (fallback == FallbackPolicy::cascade && !text_bearing.empty()) {
        video.fallback_level = 1;
        std::vector<std::size_t> indices(text_bearing.begin(), text_bearing.end());
        std::sort(indices.begin(), indices.end());
        indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
        for (auto idx : indices) push_original(video, lookup(sampled, idx));
    } else {
        video.fallback_level = 2;
        for (const auto& frame : sampled) push_original(video, frame);
    }
    return video;
}

AnswerResult answer(const RefinedVideo& refined, std::string_view question, AnswererBackend& answerer,
                    const PromptTemplate& prompt, int retries, Trace trace) {
    if (refined.frames.empty()) throw Error(ErrorKind::empty_video, "refined video is empty");
    const std::string text = prompt.render(question);
    const AnswerRequest request{refined.frames, text, question};
    std::string last_error;
    for (int attempt = 0; attempt <= std::max(retries, 0); ++attempt) {
        try {
            std::string raw = answerer.answer(request);
            AnswerResult result;
            result.answer = trim_whitespace(raw);
            result.refined = refined;
            trace.raw_answer = std::move(raw);
            trace.fallback_level = refined.fallback_level;
            result.trace = std::move(trace);
            return result;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::transport && e.kind() != ErrorKind::protocol) throw;
            last_error = e.what();
        }
    }
    throw Error(ErrorKind::answering, "answerer failed after " + std::to_string(std::max(retries, 0) + 1) +
                                          " attempt(s): " + last_error);
}

}  // namespace sfa
