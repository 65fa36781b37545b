#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfa/backends.hpp"
#include "sfa/focus.hpp"
#include "sfa/media.hpp"
#include "sfa/prompt.hpp"
#include "sfa/trace.hpp"

namespace sfa {

/// What to hand the answerer when no frame produced a key region.
enum class FallbackPolicy {
    cascade,         // text-bearing frames, else every sampled frame
    sampled_frames,  // every sampled frame
    none,            // fail with an empty-video error
};

std::string_view to_string(FallbackPolicy policy) noexcept;
FallbackPolicy parse_fallback_policy(std::string_view text);

struct FrameProvenance {
    std::size_t frame_index = 0;
    std::size_t source_index = 0;
    std::optional<Anchor> anchor;  // absent for fallback frames
    std::optional<Rect> rect;
    std::optional<double> score;
};

struct RefinedVideo {
    std::vector<FrameImage> frames;
    std::vector<FrameProvenance> provenance;
    bool fallback_used = false;
    int fallback_level = 0;
};

struct AnswerResult {
    std::string answer;
    RefinedVideo refined;
    Trace trace;
    RunStats stats;
};

/// Crops the adapted rect out of the original frame and resamples it once to
/// the frame's own size.
FrameImage amplify_region(const FrameImage& original_frame, const KeyRegion& key);

RefinedVideo assemble_refined_video(std::span<const KeyRegion> keys, std::span<const FrameImage> sampled,
                                    std::span<const std::size_t> text_bearing, FallbackPolicy fallback);

AnswerResult answer(const RefinedVideo& refined, std::string_view question, AnswererBackend& answerer,
                    const PromptTemplate& prompt, int retries = 2, Trace trace = {});

std::string trim_whitespace(std::string_view s);

}  // namespace sfa
