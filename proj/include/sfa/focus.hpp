#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "sfa/backends.hpp"
#include "sfa/prompt.hpp"
#include "sfa/scan.hpp"

namespace sfa {

enum class ParseStatus { parsed, clamped, defaulted };

std::string_view to_string(ParseStatus status) noexcept;
std::optional<ParseStatus> parse_status_from(std::string_view text) noexcept;

struct RelevanceScore {
    double value = 0.0;  // in [0, 1]
    std::string raw_response;
    ParseStatus parse_status = ParseStatus::defaulted;
    std::string note;  // backend failure message, if any

    friend bool operator==(const RelevanceScore&, const RelevanceScore&) = default;
};

/// First decimal number in `raw`: kept if in [0, 1], clamped otherwise; no
/// number at all gives 0 with status `defaulted`.
RelevanceScore parse_score(std::string_view raw);

struct ScoredWindow {
    CandidateRegion region;
    RelevanceScore score;
};

struct KeyRegion {
    std::size_t frame_index = 0;
    CandidateRegion region;
    double score = 0.0;
};

/// Asks the scorer about one window. A transport failure or an unparseable
/// reply is retried `retries` times; after that the window scores 0
/// (`defaulted`) and the failure is kept in `note`.
ScoredWindow score_window(const CandidateRegion& region, std::string_view question, ScorerBackend& scorer,
                          const PromptTemplate& prompt, int retries = 1);

/// Index of the winning window: the highest score strictly above `tau`, ties
/// resolved by anchor order. Input order does not matter.
std::optional<std::size_t> select_key_index(std::span<const Anchor> anchors, std::span<const double> scores,
                                            double tau);

std::optional<KeyRegion> select_key_region(std::span<const ScoredWindow> scored, double tau);

}  // namespace sfa
