#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli_app.hpp"
#include "sfa/config.hpp"
#include "sfa/error.hpp"
#include "sfa/eval.hpp"
#include "sfa/focus.hpp"
#include "sfa/pipeline.hpp"
#include "sfa/scan.hpp"

namespace py = pybind11;
using namespace sfa;
using nlohmann::json;

namespace {

using Box = std::tuple<double, double, double, double>;

std::vector<TextLineDetection> to_lines(const std::vector<Box>& boxes, int w, int h) {
    std::vector<TextLineDetection> lines;
    for (const auto& [x0, y0, x1, y1] : boxes) lines.push_back({Rect{x0, y0, x1, y1}, 1.0, ""});
    return normalize_detections(std::move(lines), w, h);
}

py::dict window_dict(const Window& w) {
    py::dict d;
    d["anchor"] = std::string(short_name(w.anchor));
    d["rect"] = Box{w.rect.x0, w.rect.y0, w.rect.x1, w.rect.y1};
    d["scale"] = w.scale;
    return d;
}

ConfigOverrides overrides(std::optional<double> alpha, std::optional<double> tau, std::optional<std::string> fps,
                          std::optional<std::string> cache_dir, std::optional<std::string> mock_fixtures) {
    ConfigOverrides o;
    o.alpha = alpha;
    o.tau = tau;
    o.fps = std::move(fps);
    if (cache_dir) o.cache_dir = *cache_dir;
    if (mock_fixtures) o.mock_fixtures = *mock_fixtures;
    return o;
}

std::optional<std::filesystem::path> as_path(const std::optional<std::string>& s) {
    return s ? std::optional<std::filesystem::path>(*s) : std::nullopt;
}

}  // namespace

PYBIND11_MODULE(_sfa, m) {
    m.doc() = "Scan-focus-amplify video text question answering";

    static py::exception<Error> error_type(m, "SfaError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::handle(error_type.ptr())(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            exc.attr("stage") = e.stage();
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.attr("DEFAULT_ALPHA") = kDefaultAlpha;
    m.attr("DEFAULT_TAU") = kDefaultTau;

    m.def(
        "adapted_windows",
        [](int width, int height, const std::vector<Box>& boxes, double alpha) {
            py::list out;
            for (const auto& w : adapted_windows(width, height, to_lines(boxes, width, height), alpha)) {
                out.append(window_dict(w));
            }
            return out;
        },
        py::arg("width"), py::arg("height"), py::arg("boxes"), py::arg("alpha") = kDefaultAlpha,
        "Corner windows grown until no text box is cut by a border.");

    m.def(
        "parse_score",
        [](const std::string& raw) {
            const auto s = parse_score(raw);
            return std::make_pair(s.value, std::string(to_string(s.parse_status)));
        },
        py::arg("raw"));

    m.def(
        "select_anchor",
        [](const std::vector<std::string>& anchors, const std::vector<double>& scores,
           double tau) -> std::optional<std::string> {
            std::vector<Anchor> parsed;
            for (const auto& a : anchors) {
                auto p = parse_anchor(a);
                if (!p) throw Error(ErrorKind::argument, "unknown anchor '" + a + "'");
                parsed.push_back(*p);
            }
            const auto best = select_key_index(parsed, scores, tau);
            if (!best) return std::nullopt;
            return anchors[*best];
        },
        py::arg("anchors"), py::arg("scores"), py::arg("tau") = kDefaultTau);

    m.def("normalized_levenshtein", &normalized_levenshtein, py::arg("a"), py::arg("b"));
    m.def(
        "anls_score",
        [](const std::string& prediction, const std::vector<std::string>& golds) {
            return anls_score(prediction, golds);
        },
        py::arg("prediction"), py::arg("golds"));
    m.def(
        "accuracy_match",
        [](const std::string& prediction, const std::vector<std::string>& golds) {
            return accuracy_match(prediction, golds);
        },
        py::arg("prediction"), py::arg("golds"));

    // JSON results cross the boundary as text; the Python side decodes them.
    m.def(
        "run_json",
        [](const std::string& frames, const std::string& question, const std::string& mode,
           std::optional<std::string> config, std::optional<std::string> mock_fixtures, std::optional<double> alpha,
           std::optional<double> tau, std::optional<std::string> fps, std::optional<std::string> cache_dir) {
            py::gil_scoped_release release;
            const auto cfg = load_config(as_path(config), overrides(alpha, tau, fps, cache_dir, mock_fixtures));
            const auto source = open_frame_directory(frames);
            const auto backends = make_backends(cfg);
            const auto result = parse_eval_mode(mode) == EvalMode::sfa
                                    ? run_sfa(source, question, cfg.pipeline, backends)
                                    : run_baseline(source, question, cfg.pipeline, *backends.answerer);
            return run_record(result).dump();
        },
        py::arg("frames"), py::arg("question"), py::arg("mode") = "sfa", py::arg("config") = py::none(),
        py::arg("mock_fixtures") = py::none(), py::arg("alpha") = py::none(), py::arg("tau") = py::none(),
        py::arg("fps") = py::none(), py::arg("cache_dir") = py::none());

    m.def(
        "evaluate_json",
        [](const std::string& manifest, const std::string& mode, std::optional<std::string> config,
           std::optional<std::string> mock_fixtures, std::optional<double> alpha, std::optional<double> tau,
           std::optional<std::string> fps, int jobs) {
            py::gil_scoped_release release;
            const auto cfg = load_config(as_path(config), overrides(alpha, tau, fps, std::nullopt, mock_fixtures));
            const auto samples = load_manifest(manifest, PathCheck::deferred);
            auto resolver = [&](const QASample& s) {
                if (s.mock_fixtures) return make_mock_backends(load_mock_fixtures(*s.mock_fixtures)).as_backends();
                return make_backends(cfg);
            };
            EvalOptions options;
            options.mode = parse_eval_mode(mode);
            options.max_concurrent_samples = jobs;
            return to_json(evaluate(samples, cfg.pipeline, resolver, options)).dump();
        },
        py::arg("manifest"), py::arg("mode") = "sfa", py::arg("config") = py::none(),
        py::arg("mock_fixtures") = py::none(), py::arg("alpha") = py::none(), py::arg("tau") = py::none(),
        py::arg("fps") = py::none(), py::arg("jobs") = 1);

    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
