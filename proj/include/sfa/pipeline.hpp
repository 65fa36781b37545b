#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "sfa/amplify.hpp"
#include "sfa/backends.hpp"
#include "sfa/media.hpp"
#include "sfa/prompt.hpp"

namespace sfa {

inline constexpr double kDefaultAlpha = 0.6;
inline constexpr double kDefaultTau = 0.7;

struct PipelineConfig {
    double alpha = kDefaultAlpha;   // initial window side ratio, [0.5, 1.0]
    double tau = kDefaultTau;       // relevance threshold, exceeded strictly
    Rational target_fps{1, 1};
    FallbackPolicy fallback = FallbackPolicy::cascade;
    PromptTemplate relevance_prompt = PromptTemplate::default_relevance();
    PromptTemplate answer_prompt = PromptTemplate::default_answer();
    int max_in_flight = 4;  // frame- and window-level fan-out
    int scorer_retries = 1;
    int answer_retries = 2;
    std::optional<std::filesystem::path> cache_dir;

    /// Throws a configuration error on any out-of-range field.
    void validate() const;
    nlohmann::json snapshot() const;
};

/// Scan, focus and amplify over the sampled frames of `source`, then answer.
AnswerResult run_sfa(const FrameSource& source, std::string_view question, const PipelineConfig& config,
                     const Backends& backends);

/// Same, starting from frames that are already sampled.
AnswerResult run_sfa_on_frames(std::vector<FrameImage> sampled, std::string_view question,
                               const PipelineConfig& config, const Backends& backends);

/// Sampled frames straight to the answerer.
AnswerResult run_baseline(const FrameSource& source, std::string_view question, const PipelineConfig& config,
                          AnswererBackend& answerer);

/// Recomputes each frame's selection from the scores recorded in a trace.
std::vector<std::optional<Anchor>> reselect_from_trace(const Trace& trace, double tau);

/// Full run record: answer, trace, refined-video provenance and stats.
nlohmann::json run_record(const AnswerResult& result);
void write_run_trace(const AnswerResult& result, const std::filesystem::path& path);

}  // namespace sfa
