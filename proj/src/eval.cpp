#include "sfa/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "sfa/error.hpp"

namespace sfa {

namespace fs = std::filesystem;
using nlohmann::json;

std::u32string utf8_to_scalars(std::string_view text) {
    constexpr char32_t kReplacement = 0xFFFD;
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto b0 = static_cast<unsigned char>(text[i]);
        int len = 0;
        char32_t cp = 0;
        char32_t min = 0;
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2, cp = b0 & 0x1F, min = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3, cp = b0 & 0x0F, min = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4, cp = b0 & 0x07, min = 0x10000;
        } else {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        if (i + static_cast<std::size_t>(len) > text.size()) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok || cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double normalized_levenshtein(std::string_view a, std::string_view b) {
    const auto sa = utf8_to_scalars(a);
    const auto sb = utf8_to_scalars(b);
    const std::size_t longest = std::max(sa.size(), sb.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(edit_distance(sa, sb)) / static_cast<double>(longest);
}

namespace {
bool ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool ascii_punct(char c) { return static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c)); }
}  // namespace

std::string normalize_answer(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (ascii_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
    return out;
}

namespace {
std::string strip_punctuation(std::string s) {
    std::size_t lo = 0, hi = s.size();
    while (lo < hi && (ascii_punct(s[lo]) || ascii_space(s[lo]))) ++lo;
    while (hi > lo && (ascii_punct(s[hi - 1]) || ascii_space(s[hi - 1]))) --hi;
    return s.substr(lo, hi - lo);
}

void require_golds(std::span<const std::string> golds) {
    if (golds.empty()) throw Error(ErrorKind::argument, "at least one gold answer is required");
}
}  // namespace

double anls_score(std::string_view prediction, std::span<const std::string> golds, double nl_threshold) {
    require_golds(golds);
    const std::string p = normalize_answer(prediction);
    double best = 0.0;
    for (const auto& g : golds) {
        const double nl = normalized_levenshtein(p, normalize_answer(g));
        best = std::max(best, nl < nl_threshold ? 1.0 - nl : 0.0);
    }
    return best;
}

int accuracy_match(std::string_view prediction, std::span<const std::string> golds) {
    require_golds(golds);
    const std::string p = strip_punctuation(normalize_answer(prediction));
    for (const auto& g : golds) {
        if (p == strip_punctuation(normalize_answer(g))) return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------

std::vector<QASample> load_manifest(const fs::path& path, PathCheck check) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::manifest, "cannot read manifest " + path.string());
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    std::vector<QASample> samples;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fail = [&](const std::string& what) -> Error {
            return Error(ErrorKind::manifest, path.filename().string() + " line " + std::to_string(line_no) + ": " + what);
        };
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw fail("not a JSON object");
        for (const char* field : {"sample_id", "frames_path", "fps", "question", "answers"}) {
            if (!j.contains(field)) throw fail(std::string("missing field '") + field + "'");
        }
        QASample s;
        if (!j["sample_id"].is_string() || j["sample_id"].get<std::string>().empty()) {
            throw fail("'sample_id' must be a nonempty string");
        }
        s.sample_id = j["sample_id"].get<std::string>();
        if (!seen.insert(s.sample_id).second) throw fail("duplicate sample_id '" + s.sample_id + "'");
        if (!j["question"].is_string() || j["question"].get<std::string>().empty()) {
            throw fail("'question' must be a nonempty string");
        }
        s.question = j["question"].get<std::string>();
        if (!j["answers"].is_array() || j["answers"].empty()) throw fail("'answers' must be a nonempty array");
        for (const auto& a : j["answers"]) {
            if (!a.is_string()) throw fail("'answers' must hold strings");
            s.gold_answers.push_back(a.get<std::string>());
        }
        if (!j["frames_path"].is_string()) throw fail("'frames_path' must be a string");
        Rational fps;
        try {
            fps = j["fps"].is_string() ? Rational::parse(j["fps"].get<std::string>())
                                       : Rational::parse(j["fps"].dump());
        } catch (const Error&) {
            throw fail("'fps' is not a positive rational");
        }
        if (!fps.positive()) throw fail("'fps' must be positive");
        if (j.contains("mock_fixtures")) {
            if (!j["mock_fixtures"].is_string()) throw fail("'mock_fixtures' must be a string");
            fs::path fx = j["mock_fixtures"].get<std::string>();
            s.mock_fixtures = fx.is_absolute() ? fx : base / fx;
        }
        fs::path frames = j["frames_path"].get<std::string>();
        if (frames.is_relative()) frames = base / frames;
        if (fs::is_directory(frames)) {
            s.frames = open_listed_frames(frames, fps);
        } else if (check == PathCheck::strict) {
            throw Error(ErrorKind::source, "sample '" + s.sample_id + "': frames path not found: " + frames.string());
        } else {
            s.frames = FrameSource{FrameSourceKind::manifest_listed, frames, fps, 0};
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw Error(ErrorKind::manifest, "manifest " + path.string() + " has no samples");
    return samples;
}

std::string_view to_string(EvalMode mode) noexcept { return mode == EvalMode::sfa ? "sfa" : "baseline"; }

EvalMode parse_eval_mode(std::string_view text) {
    if (text == "sfa") return EvalMode::sfa;
    if (text == "baseline") return EvalMode::baseline;
    throw Error(ErrorKind::configuration, "unknown mode '" + std::string(text) + "' (expected sfa or baseline)");
}

std::string EvalReport::summary_line() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "ACC: %.2f ANLS: %.2f", accuracy_percent, anls_percent);
    return buf;
}

void recompute_aggregates(EvalReport& report) {
    report.total = report.per_sample.size();
    report.scored = 0;
    report.errored = 0;
    double hits = 0.0, anls = 0.0;
    for (const auto& s : report.per_sample) {
        if (s.error) {
            ++report.errored;
            continue;
        }
        ++report.scored;
        hits += s.accuracy_hit;
        anls += s.anls;
    }
    report.accuracy_percent = report.scored ? 100.0 * hits / static_cast<double>(report.scored) : 0.0;
    report.anls_percent = report.scored ? 100.0 * anls / static_cast<double>(report.scored) : 0.0;
}

EvalReport evaluate(std::span<const QASample> manifest, const PipelineConfig& config, const BackendResolver& backends,
                    const EvalOptions& options) {
    config.validate();
    if (manifest.empty()) throw Error(ErrorKind::evaluation, "manifest is empty");

    EvalReport report;
    report.per_sample.resize(manifest.size());
    if (options.trace_dir) fs::create_directories(*options.trace_dir);

    detail::parallel_for(manifest.size(), options.max_concurrent_samples, [&](std::size_t i) {
        const QASample& sample = manifest[i];
        SampleOutcome& row = report.per_sample[i];
        row.sample_id = sample.sample_id;
        row.gold_answers = sample.gold_answers;
        try {
            if (!fs::is_directory(sample.frames.path)) {
                throw Error(ErrorKind::source, "sample '" + sample.sample_id + "': frames path not found: " +
                                                   sample.frames.path.string(), "sample");
            }
            const Backends b = backends(sample);
            AnswerResult result;
            if (options.mode == EvalMode::sfa) {
                result = run_sfa(sample.frames, sample.question, config, b);
            } else {
                if (!b.answerer) throw Error(ErrorKind::configuration, "no answerer backend", "config");
                result = run_baseline(sample.frames, sample.question, config, *b.answerer);
            }
            row.prediction = result.answer;
            row.fallback_used = result.refined.fallback_used;
            row.accuracy_hit = accuracy_match(row.prediction, sample.gold_answers);
            row.anls = anls_score(row.prediction, sample.gold_answers);
            if (options.trace_dir) write_run_trace(result, *options.trace_dir / (sample.sample_id + ".json"));
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    recompute_aggregates(report);
    report.config = config.snapshot();
    report.config["mode"] = std::string(to_string(options.mode));
    if (report.scored == 0) {
        throw Error(ErrorKind::evaluation, "all " + std::to_string(report.total) + " samples failed; first error: " +
                                               report.per_sample.front().error.value_or(""));
    }
    return report;
}

json to_json(const EvalReport& report) {
    json rows = json::array();
    for (const auto& s : report.per_sample) {
        rows.push_back(json{{"sample_id", s.sample_id},
                            {"prediction", s.prediction},
                            {"gold", s.gold_answers},
                            {"acc", s.accuracy_hit},
                            {"anls", s.anls},
                            {"fallback", s.fallback_used},
                            {"error", s.error ? json(*s.error) : json(nullptr)}});
    }
    return json{{"aggregate",
                 {{"accuracy_percent", report.accuracy_percent},
                  {"anls_percent", report.anls_percent},
                  {"total", report.total},
                  {"scored", report.scored},
                  {"errored", report.errored}}},
                {"summary", report.summary_line()},
                {"config", report.config},
                {"per_sample", std::move(rows)}};
}

namespace {
std::string csv_field(std::string_view v) {
    if (v.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(v);
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}
}  // namespace

std::string report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "sample_id,prediction,gold,acc,anls,fallback,error\n";
    for (const auto& s : report.per_sample) {
        std::string gold;
        for (std::size_t i = 0; i < s.gold_answers.size(); ++i) gold += (i ? "|" : "") + s.gold_answers[i];
        char anls[32];
        std::snprintf(anls, sizeof(anls), "%.6f", s.anls);
        out << csv_field(s.sample_id) << ',' << csv_field(s.prediction) << ',' << csv_field(gold) << ','
            << s.accuracy_hit << ',' << anls << ',' << (s.fallback_used ? 1 : 0) << ','
            << csv_field(s.error.value_or("")) << '\n';
    }
    return out.str();
}

void write_report(const EvalReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "summary.json");
        out << to_json(report).dump(2) << "\n";
        if (!out) throw Error(ErrorKind::evaluation, "cannot write " + (dir / "summary.json").string());
    }
    std::ofstream csv(dir / "samples.csv");
    csv << report_csv(report);
    if (!csv) throw Error(ErrorKind::evaluation, "cannot write " + (dir / "samples.csv").string());
}

}  // namespace sfa
