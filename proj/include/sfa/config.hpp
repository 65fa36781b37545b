#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "sfa/backends.hpp"
#include "sfa/pipeline.hpp"

namespace sfa {

/// Values given on the command line; unset fields defer to the config file,
/// then to built-in defaults.
struct ConfigOverrides {
    std::optional<double> alpha;
    std::optional<double> tau;
    std::optional<std::string> fps;
    std::optional<std::string> fallback;
    std::optional<int> max_in_flight;
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> mock_fixtures;
};

struct ResolvedConfig {
    PipelineConfig pipeline;
    std::optional<std::filesystem::path> mock_fixtures;
    std::optional<LiveEndpoints> endpoints;
    PromptTemplate detection_prompt = PromptTemplate::default_detection();
};

/// `file` is the parsed config file (if any); relative paths inside it
/// resolve against `file_dir`.
ResolvedConfig resolve_config(const std::optional<nlohmann::json>& file, const std::filesystem::path& file_dir,
                              const ConfigOverrides& flags);

ResolvedConfig load_config(const std::optional<std::filesystem::path>& path, const ConfigOverrides& flags);

/// Mock backends when fixtures are configured, live clients otherwise.
Backends make_backends(const ResolvedConfig& config);

}  // namespace sfa
