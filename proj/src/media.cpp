#include "sfa/media.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "sfa/error.hpp"

namespace sfa {

namespace fs = std::filesystem;

namespace {

std::int64_t parse_int(std::string_view text, std::string_view what) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw Error(ErrorKind::argument, "invalid " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

Rational reduced(std::int64_t num, std::int64_t den) {
    if (den == 0) throw Error(ErrorKind::argument, "rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const auto g = std::gcd(num, den);
    return g > 1 ? Rational{num / g, den / g} : Rational{num, den};
}

fs::path frame_file(const fs::path& dir, std::size_t index) {
    char name[32];
    for (const char* ext : {"png", "jpg", "jpeg"}) {
        std::snprintf(name, sizeof(name), "%06zu.%s", index, ext);
        fs::path candidate = dir / name;
        if (fs::exists(candidate)) return candidate;
    }
    return {};
}

std::size_t count_contiguous(const fs::path& dir) {
    std::size_t n = 0;
    while (!frame_file(dir, n).empty()) ++n;
    return n;
}

cv::Mat to_bgr(const FrameImage& image) {
    cv::Mat mat(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width; ++x) {
            const auto* p = image.at(x, y);
            row[3 * x + 0] = p[2];
            row[3 * x + 1] = p[1];
            row[3 * x + 2] = p[0];
        }
    }
    return mat;
}

FrameImage from_bgr(const cv::Mat& mat) {
    FrameImage image(mat.cols, mat.rows);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) {
            auto* p = image.at(x, y);
            p[0] = row[3 * x + 2];
            p[1] = row[3 * x + 1];
            p[2] = row[3 * x + 0];
        }
    }
    return image;
}

}  // namespace

Rational Rational::parse(std::string_view text) {
    text = trim(text);
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        return reduced(parse_int(trim(text.substr(0, slash)), "rational"),
                       parse_int(trim(text.substr(slash + 1)), "rational"));
    }
    if (auto dot = text.find('.'); dot != std::string_view::npos) {
        auto whole = text.substr(0, dot);
        auto frac = text.substr(dot + 1);
        if (frac.empty() || frac.size() > 9) throw Error(ErrorKind::argument, "invalid rational '" + std::string(text) + "'");
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const bool negative = !whole.empty() && whole.front() == '-';
        if (negative || (!whole.empty() && whole.front() == '+')) whole.remove_prefix(1);
        const std::int64_t w = whole.empty() ? 0 : parse_int(whole, "rational");
        const std::int64_t f = parse_int(frac, "rational");
        return reduced((negative ? -1 : 1) * (w * den + f), den);
    }
    return Rational{parse_int(text, "rational"), 1};
}

std::string Rational::str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

PixelRect rasterize(const Rect& rect, int width, int height) noexcept {
    auto snap = [](double v, int hi) {
        const double r = std::round(v);  // half away from zero
        return static_cast<int>(std::clamp(r, 0.0, static_cast<double>(hi)));
    };
    return PixelRect{snap(rect.x0, width), snap(rect.y0, height), snap(rect.x1, width), snap(rect.y1, height)};
}

FrameImage::FrameImage(int w, int h)
    : width(w), height(h), pixels(static_cast<std::size_t>(std::max(w, 0)) * static_cast<std::size_t>(std::max(h, 0)) * 3) {}

FrameSource open_frame_directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::source, "frame directory not found: " + dir.string());
    std::ifstream meta(dir / "frames.meta");
    if (!meta) throw Error(ErrorKind::source, "missing frames.meta in " + dir.string());

    FrameSource source{FrameSourceKind::frame_directory, dir, {}, 0};
    bool have_fps = false, have_count = false;
    std::string line;
    while (std::getline(meta, line)) {
        auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto eq = view.find('=');
        if (eq == std::string_view::npos) throw Error(ErrorKind::source, "malformed frames.meta line: " + line);
        auto key = trim(view.substr(0, eq));
        auto value = trim(view.substr(eq + 1));
        try {
            if (key == "fps") {
                source.native_fps = Rational::parse(value);
                have_fps = true;
            } else if (key == "count") {
                source.count = static_cast<std::size_t>(parse_int(value, "count"));
                have_count = true;
            }
        } catch (const Error& e) {
            throw Error(ErrorKind::source, "frames.meta in " + dir.string() + ": " + e.what());
        }
    }
    if (!have_fps || !source.native_fps.positive()) throw Error(ErrorKind::source, "frames.meta lacks a positive fps: " + dir.string());
    if (!have_count) source.count = count_contiguous(dir);
    for (std::size_t i = 0; i < source.count; ++i) {
        if (frame_file(dir, i).empty()) {
            throw Error(ErrorKind::source, "frame " + std::to_string(i) + " missing from " + dir.string());
        }
    }
    return source;
}

FrameSource open_listed_frames(const fs::path& dir, Rational native_fps) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::source, "frame directory not found: " + dir.string());
    if (!native_fps.positive()) throw Error(ErrorKind::source, "non-positive fps for " + dir.string());
    return FrameSource{FrameSourceKind::manifest_listed, dir, native_fps, count_contiguous(dir)};
}

std::vector<std::size_t> sampled_indices(std::size_t count, Rational native_fps, Rational target_fps) {
    if (!target_fps.positive()) throw Error(ErrorKind::argument, "target fps must be positive, got " + target_fps.str());
    if (!native_fps.positive()) throw Error(ErrorKind::argument, "native fps must be positive");
    const __int128 step_num = static_cast<__int128>(native_fps.num) * target_fps.den;
    const __int128 step_den = static_cast<__int128>(native_fps.den) * target_fps.num;
    if (step_num < step_den) {
        throw Error(ErrorKind::argument,
                    "target fps " + target_fps.str() + " exceeds native fps " + native_fps.str());
    }
    std::vector<std::size_t> indices;
    for (__int128 k = 0;; ++k) {
        const auto index = static_cast<std::size_t>(k * step_num / step_den);
        if (index >= count) break;
        if (indices.empty() || indices.back() != index) indices.push_back(index);
    }
    return indices;
}

std::vector<FrameImage> sample_frames(const FrameSource& source, Rational target_fps) {
    if (!target_fps.positive()) throw Error(ErrorKind::argument, "target fps must be positive, got " + target_fps.str());
    if (source.count == 0) throw Error(ErrorKind::empty_video, "no frames in " + source.path.string());
    const auto indices = sampled_indices(source.count, source.native_fps, target_fps);
    std::vector<FrameImage> frames;
    frames.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto file = frame_file(source.path, indices[k]);
        if (file.empty()) {
            throw Error(ErrorKind::source, "frame " + std::to_string(indices[k]) + " missing from " + source.path.string());
        }
        FrameImage frame = read_image(file);
        frame.frame_index = k;
        frame.source_index = indices[k];
        frame.timestamp = static_cast<double>(indices[k]) * static_cast<double>(source.native_fps.den) /
                          static_cast<double>(source.native_fps.num);
        frames.push_back(std::move(frame));
    }
    return frames;
}

FrameImage crop(const FrameImage& frame, const Rect& rect) {
    const PixelRect r = rasterize(rect, frame.width, frame.height);
    if (r.width() <= 0 || r.height() <= 0) {
        throw Error(ErrorKind::degenerate_region, "crop rectangle has zero area after rasterization");
    }
    FrameImage out(r.width(), r.height());
    out.frame_index = frame.frame_index;
    out.source_index = frame.source_index;
    out.timestamp = frame.timestamp;
    const std::size_t row_bytes = static_cast<std::size_t>(r.width()) * 3;
    for (int y = 0; y < r.height(); ++y) {
        std::copy_n(frame.at(r.x0, r.y0 + y), row_bytes, out.at(0, y));
    }
    return out;
}

FrameImage resize(const FrameImage& image, int target_w, int target_h) {
    if (target_w <= 0 || target_h <= 0) {
        throw Error(ErrorKind::argument,
                    "resize target must be positive, got " + std::to_string(target_w) + "x" + std::to_string(target_h));
    }
    if (!image.valid()) throw Error(ErrorKind::argument, "resize of an invalid image");

    struct Tap {
        int lo, hi;
        double frac;
    };
    auto taps = [](int src, int dst) {
        std::vector<Tap> out(static_cast<std::size_t>(dst));
        const double ratio = static_cast<double>(src) / static_cast<double>(dst);
        for (int i = 0; i < dst; ++i) {
            double s = (i + 0.5) * ratio - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src - 1));
            const int lo = static_cast<int>(std::floor(s));
            out[static_cast<std::size_t>(i)] = Tap{lo, std::min(lo + 1, src - 1), s - lo};
        }
        return out;
    };
    const auto xs = taps(image.width, target_w);
    const auto ys = taps(image.height, target_h);

    FrameImage out(target_w, target_h);
    out.frame_index = image.frame_index;
    out.source_index = image.source_index;
    out.timestamp = image.timestamp;
    for (int y = 0; y < target_h; ++y) {
        const Tap& ty = ys[static_cast<std::size_t>(y)];
        for (int x = 0; x < target_w; ++x) {
            const Tap& tx = xs[static_cast<std::size_t>(x)];
            const auto* p00 = image.at(tx.lo, ty.lo);
            const auto* p01 = image.at(tx.hi, ty.lo);
            const auto* p10 = image.at(tx.lo, ty.hi);
            const auto* p11 = image.at(tx.hi, ty.hi);
            auto* q = out.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - tx.frac) * p00[c] + tx.frac * p01[c];
                const double bottom = (1.0 - tx.frac) * p10[c] + tx.frac * p11[c];
                const double v = (1.0 - ty.frac) * top + ty.frac * bottom;
                q[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_image(const FrameImage& image, EncodeOptions options) {
    if (!image.valid()) throw Error(ErrorKind::encoding, "cannot encode an invalid image");
    std::vector<std::uint8_t> bytes;
    std::vector<int> params;
    const char* ext = ".png";
    if (options.format == ImageFormat::jpeg) {
        ext = ".jpg";
        params = {cv::IMWRITE_JPEG_QUALITY, std::clamp(options.jpeg_quality, 1, 100)};
    } else {
        params = {cv::IMWRITE_PNG_COMPRESSION, 6};
    }
    bool ok = false;
    try {
        ok = cv::imencode(ext, to_bgr(image), bytes, params);
    } catch (const cv::Exception& e) {
        throw Error(ErrorKind::encoding, e.what());
    }
    if (!ok) throw Error(ErrorKind::encoding, std::string("encoder rejected image as ") + ext);
    return bytes;
}

FrameImage decode_image(std::span<const std::uint8_t> bytes) {
    cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat mat;
    try {
        mat = cv::imdecode(buffer, cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        throw Error(ErrorKind::encoding, e.what());
    }
    if (mat.empty()) throw Error(ErrorKind::encoding, "could not decode image bytes");
    return from_bgr(mat);
}

FrameImage read_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::source, "cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_image(bytes);
    } catch (const Error& e) {
        throw Error(ErrorKind::source, path.string() + ": " + e.what());
    }
}

void write_image(const FrameImage& image, const fs::path& path) {
    EncodeOptions options;
    const auto ext = path.extension().string();
    if (ext == ".jpg" || ext == ".jpeg") options.format = ImageFormat::jpeg;
    const auto bytes = encode_image(image, options);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::encoding, "cannot write " + path.string());
}

void write_frame_directory(const fs::path& dir, std::span<const FrameImage> frames, Rational fps) {
    fs::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        write_image(frames[i], dir / name);
    }
    std::ofstream meta(dir / "frames.meta");
    meta << "fps=" << fps.str() << "\ncount=" << frames.size() << "\n";
}

}  // namespace sfa
