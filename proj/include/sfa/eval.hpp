#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfa/backends.hpp"
#include "sfa/media.hpp"
#include "sfa/pipeline.hpp"

namespace sfa {

/// UTF-8 to Unicode scalar values; malformed sequences become U+FFFD.
std::u32string utf8_to_scalars(std::string_view text);

/// Unit-cost edit distance over Unicode scalar values.
std::size_t edit_distance(std::u32string_view a, std::u32string_view b);

/// edit_distance / max length, 0 when both are empty.
double normalized_levenshtein(std::string_view a, std::string_view b);

/// Lower-case, trim, collapse whitespace runs to one space.
std::string normalize_answer(std::string_view text);

inline constexpr double kAnlsThreshold = 0.5;

/// max over golds of 1 - NL, where NL >= threshold scores 0.
double anls_score(std::string_view prediction, std::span<const std::string> golds,
                  double nl_threshold = kAnlsThreshold);

/// 1 when the prediction equals some gold after normalization and stripping
/// surrounding ASCII punctuation.
int accuracy_match(std::string_view prediction, std::span<const std::string> golds);

struct QASample {
    std::string sample_id;
    FrameSource frames;
    std::string question;
    std::vector<std::string> gold_answers;
    std::optional<std::filesystem::path> mock_fixtures;  // per-sample fixture override
};

enum class PathCheck { strict, deferred };

/// One JSON record per line: sample_id, frames_path, fps, question, answers,
/// and optionally mock_fixtures. Relative paths resolve against the manifest.
/// With PathCheck::deferred a missing frames directory is left for evaluate()
/// to report on that sample alone.
std::vector<QASample> load_manifest(const std::filesystem::path& path, PathCheck check = PathCheck::strict);

enum class EvalMode { sfa, baseline };
std::string_view to_string(EvalMode mode) noexcept;
EvalMode parse_eval_mode(std::string_view text);

struct SampleOutcome {
    std::string sample_id;
    std::string prediction;
    std::vector<std::string> gold_answers;
    int accuracy_hit = 0;
    double anls = 0.0;
    bool fallback_used = false;
    std::optional<std::string> error;
};

struct EvalReport {
    std::vector<SampleOutcome> per_sample;
    double accuracy_percent = 0.0;
    double anls_percent = 0.0;
    std::size_t total = 0;
    std::size_t scored = 0;
    std::size_t errored = 0;
    nlohmann::json config;

    /// "ACC: 75.00 ANLS: 97.50"
    std::string summary_line() const;
};

/// Backends to use for one sample.
using BackendResolver = std::function<Backends(const QASample&)>;

struct EvalOptions {
    EvalMode mode = EvalMode::sfa;
    int max_concurrent_samples = 1;
    /// When set, each sample's AnswerResult is written to <dir>/<sample_id>.json.
    std::optional<std::filesystem::path> trace_dir;
};

EvalReport evaluate(std::span<const QASample> manifest, const PipelineConfig& config, const BackendResolver& backends,
                    const EvalOptions& options = {});

/// Recomputes the aggregate fields from per_sample.
void recompute_aggregates(EvalReport& report);

nlohmann::json to_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
/// Writes summary.json and samples.csv into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace sfa
