#include "sfa/scan.hpp"

#include <algorithm>
#include <cmath>

#include "sfa/error.hpp"

namespace sfa {

std::optional<TextLineDetection> clip_detection(TextLineDetection det, int frame_w, int frame_h) {
    const double w = frame_w, h = frame_h;
    det.bbox.x0 = std::clamp(det.bbox.x0, 0.0, w);
    det.bbox.x1 = std::clamp(det.bbox.x1, 0.0, w);
    det.bbox.y0 = std::clamp(det.bbox.y0, 0.0, h);
    det.bbox.y1 = std::clamp(det.bbox.y1, 0.0, h);
    if (!det.bbox.valid()) return std::nullopt;
    det.confidence = std::isfinite(det.confidence) ? std::clamp(det.confidence, 0.0, 1.0) : 0.0;
    return det;
}

std::string_view to_string(Anchor anchor) noexcept {
    switch (anchor) {
        case Anchor::top_left: return "top_left";
        case Anchor::top_right: return "top_right";
        case Anchor::bottom_left: return "bottom_left";
        case Anchor::bottom_right: return "bottom_right";
    }
    return "?";
}

std::string_view short_name(Anchor anchor) noexcept {
    switch (anchor) {
        case Anchor::top_left: return "TL";
        case Anchor::top_right: return "TR";
        case Anchor::bottom_left: return "BL";
        case Anchor::bottom_right: return "BR";
    }
    return "?";
}

std::optional<Anchor> parse_anchor(std::string_view text) noexcept {
    for (Anchor a : kAnchorOrder) {
        if (text == to_string(a) || text == short_name(a)) return a;
    }
    return std::nullopt;
}

namespace {
bool pinned_right(Anchor a) { return a == Anchor::top_right || a == Anchor::bottom_right; }
bool pinned_bottom(Anchor a) { return a == Anchor::bottom_left || a == Anchor::bottom_right; }
}  // namespace

Rect anchored_rect(Anchor anchor, double scale, int frame_w, int frame_h) noexcept {
    const double w = frame_w, h = frame_h;
    const double ww = w * scale, wh = h * scale;
    Rect r;
    if (pinned_right(anchor)) {
        r.x0 = w - ww;
        r.x1 = w;
    } else {
        r.x0 = 0.0;
        r.x1 = ww;
    }
    if (pinned_bottom(anchor)) {
        r.y0 = h - wh;
        r.y1 = h;
    } else {
        r.y0 = 0.0;
        r.y1 = wh;
    }
    return r;
}

double required_scale(Anchor anchor, const Rect& box, int frame_w, int frame_h) noexcept {
    const double w = frame_w, h = frame_h;
    const double sx = pinned_right(anchor) ? (w - box.x0) / w : box.x1 / w;
    const double sy = pinned_bottom(anchor) ? (h - box.y0) / h : box.y1 / h;
    return std::max(sx, sy);
}

bool intersects(const Rect& a, const Rect& b) noexcept {
    return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

bool window_contains(const Window& window, const Rect& box, int frame_w, int frame_h) noexcept {
    return required_scale(window.anchor, box, frame_w, frame_h) <= window.scale;
}

void validate_alpha(double alpha) {
    if (!(alpha >= 0.5 && alpha <= 1.0)) {
        throw Error(ErrorKind::configuration, "alpha must lie in [0.5, 1.0], got " + std::to_string(alpha));
    }
}

std::vector<Window> initial_windows(int frame_w, int frame_h, double alpha) {
    validate_alpha(alpha);
    if (frame_w <= 0 || frame_h <= 0) throw Error(ErrorKind::argument, "frame dimensions must be positive");
    std::vector<Window> out;
    for (Anchor anchor : kAnchorOrder) {
        Window candidate{anchor, anchored_rect(anchor, alpha, frame_w, frame_h), alpha, 0};
        const bool duplicate =
            std::any_of(out.begin(), out.end(), [&](const Window& w) { return w.rect == candidate.rect; });
        if (!duplicate) out.push_back(candidate);
    }
    return out;
}

Window adapt_window(const Window& window, std::span<const TextLineDetection> lines, int frame_w, int frame_h) {
    Window out = window;
    // Each pass absorbs every line cut by the current border; growth may cut
    // new lines, so repeat. Contained lines stay contained as the scale rises.
    for (;;) {
        double needed = out.scale;
        for (const auto& line : lines) {
            if (!intersects(out.rect, line.bbox)) continue;
            needed = std::max(needed, required_scale(out.anchor, line.bbox, frame_w, frame_h));
        }
        if (needed <= out.scale) break;
        out.scale = std::min(needed, 1.0);
        out.rect = anchored_rect(out.anchor, out.scale, frame_w, frame_h);
        if (out.scale >= 1.0) break;
    }
    return out;
}

std::vector<Window> adapted_windows(int frame_w, int frame_h, std::span<const TextLineDetection> lines, double alpha,
                                    std::size_t frame_index) {
    auto windows = initial_windows(frame_w, frame_h, alpha);
    for (auto& w : windows) {
        w.frame_index = frame_index;
        w = adapt_window(w, lines, frame_w, frame_h);
    }
    return windows;
}

std::vector<CandidateRegion> filter_and_build(const FrameImage& frame, std::span<const Window> windows,
                                              std::span<const TextLineDetection> lines, double alpha) {
    validate_alpha(alpha);
    const int norm_w = static_cast<int>(std::lround(frame.width * alpha));
    const int norm_h = static_cast<int>(std::lround(frame.height * alpha));

    std::vector<CandidateRegion> out;
    for (const auto& window : windows) {
        CandidateRegion region;
        region.window = window;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (window_contains(window, lines[i].bbox, frame.width, frame.height)) {
                region.contained_lines.push_back(lines[i]);
                region.contained_line_ids.push_back(i);
            }
        }
        if (region.contained_lines.empty()) continue;
        region.normalized_image = resize(crop(frame, window.rect), norm_w, norm_h);
        out.push_back(std::move(region));
    }
    std::stable_sort(out.begin(), out.end(), [](const CandidateRegion& a, const CandidateRegion& b) {
        return a.window.anchor < b.window.anchor;
    });
    return out;
}

std::vector<CandidateRegion> scan_frame(const FrameImage& frame, std::span<const TextLineDetection> lines,
                                        double alpha) {
    validate_alpha(alpha);
    if (lines.empty()) return {};
    const auto windows = adapted_windows(frame.width, frame.height, lines, alpha, frame.frame_index);
    return filter_and_build(frame, windows, lines, alpha);
}

}  // namespace sfa
