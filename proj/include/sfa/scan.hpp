#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfa/media.hpp"

namespace sfa {

struct TextLineDetection {
    Rect bbox;
    double confidence = 1.0;
    std::string transcription;

    friend bool operator==(const TextLineDetection&, const TextLineDetection&) = default;
};

/// Clips a detection to the frame and clamps its confidence to [0, 1].
/// Returns nothing when the clipped box has no area.
std::optional<TextLineDetection> clip_detection(TextLineDetection det, int frame_w, int frame_h);

/// Corner a window is pinned to. Declaration order is the tie-break order.
enum class Anchor { top_left = 0, top_right = 1, bottom_left = 2, bottom_right = 3 };

inline constexpr std::array<Anchor, 4> kAnchorOrder = {Anchor::top_left, Anchor::top_right, Anchor::bottom_left,
                                                       Anchor::bottom_right};

std::string_view to_string(Anchor anchor) noexcept;
std::string_view short_name(Anchor anchor) noexcept;  // TL, TR, BL, BR
/// Accepts either the long or the short spelling.
std::optional<Anchor> parse_anchor(std::string_view text) noexcept;

struct Window {
    Anchor anchor = Anchor::top_left;
    Rect rect;
    double scale = 1.0;
    std::size_t frame_index = 0;

    friend bool operator==(const Window&, const Window&) = default;
};

/// Rect of a window of the given scale pinned at `anchor` of a w x h frame.
Rect anchored_rect(Anchor anchor, double scale, int frame_w, int frame_h) noexcept;

/// Smallest scale at which a window pinned at `anchor` fully contains `box`.
double required_scale(Anchor anchor, const Rect& box, int frame_w, int frame_h) noexcept;

/// Positive-area overlap; touching edges do not count.
bool intersects(const Rect& a, const Rect& b) noexcept;

/// Containment decided in scale space so it agrees exactly with adapt_window.
bool window_contains(const Window& window, const Rect& box, int frame_w, int frame_h) noexcept;

struct CandidateRegion {
    Window window;
    FrameImage normalized_image;
    std::vector<TextLineDetection> contained_lines;
    std::vector<std::size_t> contained_line_ids;  // indices into the frame's detection list
};

void validate_alpha(double alpha);

/// Up to four corner windows of size (w*alpha, h*alpha); coincident windows are
/// collapsed, keeping the first in TL, TR, BL, BR order.
std::vector<Window> initial_windows(int frame_w, int frame_h, double alpha);

/// Grows `window` about its anchor until no text line is cut by its border.
Window adapt_window(const Window& window, std::span<const TextLineDetection> lines, int frame_w, int frame_h);

/// Keeps windows holding at least one whole line and renders each one at
/// (round(w*alpha), round(h*alpha)).
std::vector<CandidateRegion> filter_and_build(const FrameImage& frame, std::span<const Window> windows,
                                              std::span<const TextLineDetection> lines, double alpha);

std::vector<CandidateRegion> scan_frame(const FrameImage& frame, std::span<const TextLineDetection> lines,
                                        double alpha);

/// Adapted windows for a frame, before the empty-window filter.
std::vector<Window> adapted_windows(int frame_w, int frame_h, std::span<const TextLineDetection> lines,
                                    double alpha, std::size_t frame_index = 0);

}  // namespace sfa
