#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfa/media.hpp"
#include "sfa/prompt.hpp"

namespace sfa {

enum class CacheStage { detections, scores, answers };

inline constexpr CacheStage kCacheStages[] = {CacheStage::detections, CacheStage::scores, CacheStage::answers};

std::string_view to_string(CacheStage stage) noexcept;

std::string detection_cache_key(const FrameImage& frame, std::string_view detector_model);
std::string score_cache_key(const FrameImage& normalized_window, std::string_view question,
                            std::string_view scorer_model, const PromptTemplate& prompt);
std::string answer_cache_key(std::span<const FrameImage> frames, std::string_view question,
                             std::string_view answerer_model, std::string_view rendered_prompt);

/// Content-addressed store of backend results, one JSON file per entry under
/// `<dir>/<stage>/<key[0:2]>/<key>.json`. Safe for concurrent use.
class ResultCache {
public:
    explicit ResultCache(std::filesystem::path dir);

    /// A corrupt entry is deleted, reported through `warnings`, and treated as
    /// a miss.
    std::optional<nlohmann::json> get(CacheStage stage, const std::string& key,
                                      std::vector<std::string>* warnings = nullptr) const;
    void put(CacheStage stage, const std::string& key, const nlohmann::json& value) const;

    std::size_t size(CacheStage stage) const;
    void clear() const;
    const std::filesystem::path& dir() const noexcept { return dir_; }

    std::filesystem::path entry_path(CacheStage stage, const std::string& key) const;

private:
    std::filesystem::path dir_;
};

}  // namespace sfa
