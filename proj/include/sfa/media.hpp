#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sfa {

/// Exact positive/negative fraction, used for frame rates such as 30000/1001.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    /// Accepts "30", "30000/1001" or a decimal such as "0.5".
    static Rational parse(std::string_view text);

    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    bool positive() const noexcept { return num > 0 && den > 0; }
    std::string str() const;

    friend bool operator==(const Rational& a, const Rational& b) noexcept {
        return a.num * b.den == b.num * a.den;
    }
};

/// Axis-aligned rectangle in real-valued pixel coordinates, origin top-left.
struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    double width() const noexcept { return x1 - x0; }
    double height() const noexcept { return y1 - y0; }
    bool valid() const noexcept { return x0 < x1 && y0 < y1; }

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Integer rectangle after rasterization; [x0, x1) x [y0, y1).
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const noexcept { return x1 - x0; }
    int height() const noexcept { return y1 - y0; }

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Rounds half away from zero, then clamps to [0, width] x [0, height].
PixelRect rasterize(const Rect& rect, int width, int height) noexcept;

/// Decoded RGB raster, row-major, 3 bytes per pixel.
struct FrameImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    std::size_t frame_index = 0;   // ordinal within the sampled sequence
    std::size_t source_index = 0;  // index in the frame directory
    double timestamp = 0.0;        // seconds

    FrameImage() = default;
    FrameImage(int w, int h);

    bool valid() const noexcept {
        return width > 0 && height > 0 &&
               pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
    }

    std::uint8_t* at(int x, int y) noexcept { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const noexcept {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

enum class FrameSourceKind { frame_directory, manifest_listed };

struct FrameSource {
    FrameSourceKind kind = FrameSourceKind::frame_directory;
    std::filesystem::path path;
    Rational native_fps{1, 1};
    std::size_t count = 0;
};

/// Opens a frame directory via its `frames.meta` sidecar (`fps=` and `count=`).
FrameSource open_frame_directory(const std::filesystem::path& dir);

/// Frame directory whose rate comes from a manifest record; `frames.meta` is
/// optional and the count is taken from the contiguous run of frame files.
FrameSource open_listed_frames(const std::filesystem::path& dir, Rational native_fps);

/// Source indices chosen by sampling at `target_fps`: floor(k * native / target).
std::vector<std::size_t> sampled_indices(std::size_t count, Rational native_fps, Rational target_fps);

std::vector<FrameImage> sample_frames(const FrameSource& source, Rational target_fps);

FrameImage crop(const FrameImage& frame, const Rect& rect);

/// Bilinear resample with pixel-centre alignment and edge-clamped taps.
FrameImage resize(const FrameImage& image, int target_w, int target_h);

enum class ImageFormat { png, jpeg };

struct EncodeOptions {
    ImageFormat format = ImageFormat::png;
    int jpeg_quality = 90;
};

std::vector<std::uint8_t> encode_image(const FrameImage& image, EncodeOptions options = {});
FrameImage decode_image(std::span<const std::uint8_t> bytes);

FrameImage read_image(const std::filesystem::path& path);
void write_image(const FrameImage& image, const std::filesystem::path& path);

/// Writes `%06d.png` files plus `frames.meta`; used by fixtures and tooling.
void write_frame_directory(const std::filesystem::path& dir, std::span<const FrameImage> frames, Rational fps);

}  // namespace sfa
