#include "sfa/cache.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "sfa/digest.hpp"
#include "sfa/error.hpp"

namespace sfa {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CacheStage stage) noexcept {
    switch (stage) {
        case CacheStage::detections: return "detections";
        case CacheStage::scores: return "scores";
        case CacheStage::answers: return "answers";
    }
    return "?";
}

namespace {
void add_image(Digest& d, const FrameImage& image) {
    d.add(static_cast<std::int64_t>(image.width)).add(static_cast<std::int64_t>(image.height)).add(image.pixels);
}
}  // namespace

std::string detection_cache_key(const FrameImage& frame, std::string_view detector_model) {
    Digest d;
    d.add("detections");
    add_image(d, frame);
    d.add(detector_model);
    return d.hex();
}

std::string score_cache_key(const FrameImage& normalized_window, std::string_view question,
                            std::string_view scorer_model, const PromptTemplate& prompt) {
    Digest d;
    d.add("scores");
    add_image(d, normalized_window);
    d.add(question).add(scorer_model).add(prompt.text);
    return d.hex();
}

std::string answer_cache_key(std::span<const FrameImage> frames, std::string_view question,
                             std::string_view answerer_model, std::string_view rendered_prompt) {
    Digest d;
    d.add("answers");
    d.add(static_cast<std::int64_t>(frames.size()));
    for (const auto& f : frames) add_image(d, f);
    d.add(question).add(answerer_model).add(rendered_prompt);
    return d.hex();
}

ResultCache::ResultCache(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::configuration, "cannot create cache directory " + dir_.string() + ": " + ec.message());
}

fs::path ResultCache::entry_path(CacheStage stage, const std::string& key) const {
    return dir_ / std::string(to_string(stage)) / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ResultCache::get(CacheStage stage, const std::string& key,
                                     std::vector<std::string>* warnings) const {
    const auto path = entry_path(stage, key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    in.close();
    auto entry = json::parse(ss.str(), nullptr, false);
    if (!entry.is_discarded() && entry.is_object() && entry.value("key", "") == key &&
        entry.value("stage", "") == to_string(stage) && entry.contains("value")) {
        return entry["value"];
    }
    if (warnings) warnings->push_back("corrupt cache entry " + path.filename().string() + " ignored");
    std::error_code ec;
    fs::remove(path, ec);
    return std::nullopt;
}

void ResultCache::put(CacheStage stage, const std::string& key, const json& value) const {
    static std::atomic<std::uint64_t> counter{0};
    const auto path = entry_path(stage, key);
    fs::create_directories(path.parent_path());
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
             << counter++;
    const auto tmp = path.parent_path() / tmp_name.str();
    {
        std::ofstream out(tmp);
        out << json{{"key", key}, {"stage", std::string(to_string(stage))}, {"value", value}}.dump();
        if (!out) throw Error(ErrorKind::source, "cannot write cache entry " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::size_t ResultCache::size(CacheStage stage) const {
    const auto root = dir_ / std::string(to_string(stage));
    if (!fs::exists(root)) return 0;
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ".json") ++n;
    }
    return n;
}

void ResultCache::clear() const {
    for (auto stage : kCacheStages) fs::remove_all(dir_ / std::string(to_string(stage)));
}

}  // namespace sfa
