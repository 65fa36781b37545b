#include "sfa/focus.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "sfa/error.hpp"

namespace sfa {

std::string_view to_string(ParseStatus status) noexcept {
    switch (status) {
        case ParseStatus::parsed: return "parsed";
        case ParseStatus::clamped: return "clamped";
        case ParseStatus::defaulted: return "defaulted";
    }
    return "?";
}

std::optional<ParseStatus> parse_status_from(std::string_view text) noexcept {
    for (auto s : {ParseStatus::parsed, ParseStatus::clamped, ParseStatus::defaulted}) {
        if (text == to_string(s)) return s;
    }
    return std::nullopt;
}

RelevanceScore parse_score(std::string_view raw) {
    static const std::regex kNumber(R"([-+]?(?:\d+(?:\.\d+)?|\.\d+))");
    RelevanceScore score;
    score.raw_response = std::string(raw);
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(raw.begin(), raw.end(), m, kNumber)) {
        score.value = 0.0;
        score.parse_status = ParseStatus::defaulted;
        return score;
    }
    const double v = std::stod(m.str());
    if (!std::isfinite(v)) {
        score.value = v > 0 ? 1.0 : 0.0;
        score.parse_status = ParseStatus::clamped;
    } else if (v >= 0.0 && v <= 1.0) {
        score.value = v;
        score.parse_status = ParseStatus::parsed;
    } else {
        score.value = std::clamp(v, 0.0, 1.0);
        score.parse_status = ParseStatus::clamped;
    }
    return score;
}

ScoredWindow score_window(const CandidateRegion& region, std::string_view question, ScorerBackend& scorer,
                          const PromptTemplate& prompt, int retries) {
    const std::string text = prompt.render(question);
    const ScoreRequest request{region.normalized_image, text, region.window.frame_index, region.window.anchor};
    RelevanceScore last;
    for (int attempt = 0; attempt <= std::max(retries, 0); ++attempt) {
        try {
            last = parse_score(scorer.score(request));
            if (last.parse_status != ParseStatus::defaulted) return ScoredWindow{region, last};
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::transport && e.kind() != ErrorKind::protocol) throw;
            last = RelevanceScore{0.0, {}, ParseStatus::defaulted, e.what()};
        }
    }
    return ScoredWindow{region, last};
}

std::optional<std::size_t> select_key_index(std::span<const Anchor> anchors, std::span<const double> scores,
                                            double tau) {
    if (anchors.size() != scores.size()) throw Error(ErrorKind::argument, "anchor and score counts differ");
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] > tau)) continue;
        if (!best || scores[i] > scores[*best] || (scores[i] == scores[*best] && anchors[i] < anchors[*best])) {
            best = i;
        }
    }
    return best;
}

std::optional<KeyRegion> select_key_region(std::span<const ScoredWindow> scored, double tau) {
    std::vector<Anchor> anchors;
    std::vector<double> values;
    anchors.reserve(scored.size());
    values.reserve(scored.size());
    for (const auto& s : scored) {
        anchors.push_back(s.region.window.anchor);
        values.push_back(s.score.value);
    }
    const auto best = select_key_index(anchors, values, tau);
    if (!best) return std::nullopt;
    const auto& winner = scored[*best];
    return KeyRegion{winner.region.window.frame_index, winner.region, winner.score.value};
}

}  // namespace sfa
