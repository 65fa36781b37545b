#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "random_scenes.hpp"
#include "scenario.hpp"
#include "sfa/error.hpp"
#include "sfa/scan.hpp"

namespace sfa {
namespace {

TextLineDetection line(double x0, double y0, double x1, double y1) { return {Rect{x0, y0, x1, y1}, 0.9, ""}; }

oracle::Box box(const Rect& r) { return {r.x0, r.y0, r.x1, r.y1}; }

TEST(InitialWindows, FourCornersAtDefaultAlpha) {
    const auto w = initial_windows(1920, 1080, 0.6);
    ASSERT_EQ(w.size(), 4u);
    EXPECT_EQ(w[0].anchor, Anchor::top_left);
    EXPECT_EQ(w[0].rect, (Rect{0, 0, 1152, 648}));
    EXPECT_EQ(w[1].anchor, Anchor::top_right);
    EXPECT_EQ(w[1].rect, (Rect{768, 0, 1920, 648}));
    EXPECT_EQ(w[2].anchor, Anchor::bottom_left);
    EXPECT_EQ(w[2].rect, (Rect{0, 432, 1152, 1080}));
    EXPECT_EQ(w[3].anchor, Anchor::bottom_right);
    EXPECT_EQ(w[3].rect, (Rect{768, 432, 1920, 1080}));
    for (const auto& win : w) EXPECT_DOUBLE_EQ(win.scale, 0.6);
}

TEST(InitialWindows, AlphaOneCollapsesToFullFrame) {
    const auto w = initial_windows(1920, 1080, 1.0);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].anchor, Anchor::top_left);
    EXPECT_EQ(w[0].rect, (Rect{0, 0, 1920, 1080}));
}

TEST(InitialWindows, HalfAlphaTilesTheFrame) {
    const auto w = initial_windows(100, 100, 0.5);
    ASSERT_EQ(w.size(), 4u);
    EXPECT_EQ(w[0].rect, (Rect{0, 0, 50, 50}));
    EXPECT_EQ(w[1].rect, (Rect{50, 0, 100, 50}));
    EXPECT_EQ(w[2].rect, (Rect{0, 50, 50, 100}));
    EXPECT_EQ(w[3].rect, (Rect{50, 50, 100, 100}));
}

TEST(InitialWindows, AlphaOutsideRangeIsConfigurationError) {
    for (double a : {0.3, 0.49, 1.01, -1.0, std::nan("")}) {
        try {
            initial_windows(100, 100, a);
            FAIL() << a;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::configuration);
        }
    }
}

TEST(AdaptWindow, GrowsToContainTruncatedLine) {
    const auto tl = initial_windows(1920, 1080, 0.6)[0];
    const std::vector<TextLineDetection> lines{line(1100, 600, 1300, 640)};
    const auto out = adapt_window(tl, lines, 1920, 1080);
    EXPECT_DOUBLE_EQ(out.scale, 1300.0 / 1920.0);
    EXPECT_NEAR(out.scale, 0.67708, 1e-5);
    EXPECT_EQ(out.rect.x0, 0.0);
    EXPECT_EQ(out.rect.y0, 0.0);
    EXPECT_DOUBLE_EQ(out.rect.x1, 1300.0);
    EXPECT_DOUBLE_EQ(out.rect.y1, 731.25);
    EXPECT_TRUE(window_contains(out, lines[0].bbox, 1920, 1080));
    // Brute-force grid agrees.
    EXPECT_NEAR(oracle::grid_min_scale(oracle::TL, 0.6, 1920, 1080, {box(lines[0].bbox)}), out.scale, 1e-4);
}

TEST(AdaptWindow, AlreadyCleanWindowIsUnchanged) {
    const auto tl = initial_windows(1920, 1080, 0.6)[0];
    const std::vector<TextLineDetection> lines{line(100, 100, 400, 150), line(1500, 900, 1800, 950)};
    EXPECT_EQ(adapt_window(tl, lines, 1920, 1080), tl);
}

TEST(AdaptWindow, NearlyFullWidthLine) {
    const auto tl = initial_windows(1920, 1080, 0.6)[0];
    const std::vector<TextLineDetection> lines{line(10, 10, 1910, 70)};
    const auto out = adapt_window(tl, lines, 1920, 1080);
    EXPECT_DOUBLE_EQ(out.scale, 1910.0 / 1920.0);
    EXPECT_NEAR(oracle::grid_min_scale(oracle::TL, 0.6, 1920, 1080, {box(lines[0].bbox)}), out.scale, 1e-4);
}

TEST(AdaptWindow, GrowthCascadesThroughNewlyCutLines) {
    // Absorbing the first line pushes the border into the second.
    const auto tl = initial_windows(1000, 1000, 0.5)[0];
    const std::vector<TextLineDetection> lines{line(450, 100, 600, 130), line(550, 550, 800, 610)};
    const auto out = adapt_window(tl, lines, 1000, 1000);
    EXPECT_DOUBLE_EQ(out.scale, 0.8);
    std::vector<oracle::Box> boxes{box(lines[0].bbox), box(lines[1].bbox)};
    EXPECT_NEAR(oracle::grid_min_scale(oracle::TL, 0.5, 1000, 1000, boxes), out.scale, 1e-4);
}

TEST(AdaptWindow, BottomRightAnchorStaysPinned) {
    const auto br = initial_windows(1920, 1080, 0.6)[3];
    const std::vector<TextLineDetection> lines{line(600, 500, 900, 540)};
    const auto out = adapt_window(br, lines, 1920, 1080);
    EXPECT_DOUBLE_EQ(out.scale, (1920.0 - 600.0) / 1920.0);
    EXPECT_EQ(out.rect.x1, 1920.0);
    EXPECT_EQ(out.rect.y1, 1080.0);
}

TEST(AdaptWindow, TouchingBorderIsNotTruncation) {
    const auto tl = initial_windows(1920, 1080, 0.6)[0];
    const std::vector<TextLineDetection> lines{line(1152, 100, 1400, 150)};
    EXPECT_EQ(adapt_window(tl, lines, 1920, 1080).scale, 0.6);
}

TEST(FilterAndBuild, KeepsOnlyWindowsHoldingAWholeLine) {
    const auto frame = testing::synthetic_frame(testing::kPosterWidth, testing::kPosterHeight, 1);
    const std::vector<TextLineDetection> lines{line(40, 40, 200, 70)};
    const auto windows = adapted_windows(frame.width, frame.height, lines, 0.6);
    const auto regions = filter_and_build(frame, windows, lines, 0.6);
    ASSERT_EQ(regions.size(), 1u);
    EXPECT_EQ(regions[0].window.anchor, Anchor::top_left);
    EXPECT_EQ(regions[0].contained_line_ids, (std::vector<std::size_t>{0}));
}

TEST(FilterAndBuild, NoDetectionsGivesNothing) {
    const auto frame = testing::synthetic_frame(64, 36, 1);
    const auto windows = initial_windows(64, 36, 0.6);
    EXPECT_TRUE(filter_and_build(frame, windows, {}, 0.6).empty());
}

TEST(FilterAndBuild, GrownWindowIsNormalizedToAlphaSize) {
    const auto frame = testing::synthetic_frame(1920, 1080, 2);
    Window grown{Anchor::top_left, Rect{0, 0, 1300, 731.25}, 1300.0 / 1920.0, 0};
    const std::vector<TextLineDetection> lines{line(1100, 600, 1300, 640)};
    const auto regions = filter_and_build(frame, std::vector<Window>{grown}, lines, 0.6);
    ASSERT_EQ(regions.size(), 1u);
    EXPECT_EQ(regions[0].normalized_image.width, 1152);
    EXPECT_EQ(regions[0].normalized_image.height, 648);
}

TEST(ScanFrame, TextFreeFrameIsDiscarded) {
    const auto frame = testing::synthetic_frame(640, 360, 1);
    EXPECT_TRUE(scan_frame(frame, {}, 0.6).empty());
}

TEST(ScanFrame, CentredLineLandsInAllFourWindows) {
    const auto frame = testing::synthetic_frame(1920, 1080, 1);
    const std::vector<TextLineDetection> lines{line(900, 520, 1020, 560)};
    const auto regions = scan_frame(frame, lines, 0.6);
    ASSERT_EQ(regions.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(regions[i].window.anchor, kAnchorOrder[i]);
        EXPECT_DOUBLE_EQ(regions[i].window.scale, 0.6);
    }
}

TEST(ScanFrame, AlphaOneYieldsOneFullFrameRegion) {
    const auto frame = testing::synthetic_frame(320, 180, 1);
    const std::vector<TextLineDetection> lines{line(10, 10, 50, 30), line(200, 100, 300, 120)};
    const auto regions = scan_frame(frame, lines, 1.0);
    ASSERT_EQ(regions.size(), 1u);
    EXPECT_EQ(regions[0].window.rect, (Rect{0, 0, 320, 180}));
    EXPECT_EQ(regions[0].normalized_image.pixels, frame.pixels);
}

TEST(ScanFrame, PosterFrameTwoGrowsTopLeft) {
    const auto frame = testing::synthetic_frame(testing::kPosterWidth, testing::kPosterHeight, 3);
    const std::vector<TextLineDetection> lines{line(350, 20, 450, 50), line(280, 170, 360, 190)};
    const auto regions = scan_frame(frame, lines, 0.6);
    ASSERT_EQ(regions.size(), 4u);
    EXPECT_DOUBLE_EQ(regions[0].window.scale, 450.0 / 640.0);
    EXPECT_EQ(regions[0].contained_line_ids, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(regions[1].contained_line_ids, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(regions[2].contained_line_ids, (std::vector<std::size_t>{1}));
    EXPECT_EQ(regions[3].contained_line_ids, (std::vector<std::size_t>{1}));
    for (const auto& r : regions) {
        EXPECT_EQ(r.normalized_image.width, 384);
        EXPECT_EQ(r.normalized_image.height, 216);
    }
}

TEST(ClipDetection, ClipsAndDropsEmpty) {
    auto d = clip_detection(line(-5, 10, 700, 20), 640, 360);
    ASSERT_TRUE(d);
    EXPECT_EQ(d->bbox, (Rect{0, 10, 640, 20}));
    EXPECT_FALSE(clip_detection(line(650, 10, 700, 20), 640, 360));
    TextLineDetection hot{Rect{1, 1, 2, 2}, 1.7, ""};
    EXPECT_EQ(clip_detection(hot, 10, 10)->confidence, 1.0);
}

// Property checks over random scenes; the acceptance suite runs the full-size
// version of the same comparison.
TEST(ScanProperties, AdaptedScaleMatchesGridOracleAndInvariantsHold) {
    std::mt19937_64 rng(20240611);
    for (int trial = 0; trial < 150; ++trial) {
        const auto scene = testing::random_scene(rng);
        const double w = scene.width, h = scene.height;
        std::vector<oracle::Box> boxes;
        for (const auto& l : scene.lines) boxes.push_back(box(l.bbox));
        const auto windows = adapted_windows(scene.width, scene.height, scene.lines, scene.alpha);
        for (const auto& win : windows) {
            const auto corner = static_cast<oracle::Corner>(static_cast<int>(win.anchor));
            EXPECT_NEAR(win.scale, oracle::grid_min_scale(corner, scene.alpha, w, h, boxes), 1e-4);
            EXPECT_GE(win.scale, scene.alpha);
            EXPECT_LE(win.scale, 1.0);
            EXPECT_LE(std::abs(win.rect.width() / win.rect.height() - w / h) / (w / h), 1e-6);
            EXPECT_TRUE(oracle::window_is_clean(box(win.rect), boxes, 1e-9 * std::max(w, h)));
        }
    }
}

TEST(ScanProperties, ScanIsDeterministic) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        auto scene = testing::random_scene(rng);
        scene.width = std::min(scene.width, 640);
        scene.height = std::min(scene.height, 480);
        std::vector<TextLineDetection> lines;
        for (auto& l : scene.lines) {
            if (auto c = clip_detection(l, scene.width, scene.height)) lines.push_back(*c);
        }
        const auto frame = testing::synthetic_frame(scene.width, scene.height, static_cast<unsigned>(trial));
        const auto a = scan_frame(frame, lines, scene.alpha);
        const auto b = scan_frame(frame, lines, scene.alpha);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].window, b[i].window);
            EXPECT_EQ(a[i].normalized_image.pixels, b[i].normalized_image.pixels);
        }
    }
}

}  // namespace
}  // namespace sfa
