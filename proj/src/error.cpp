#include "sfa/error.hpp"

namespace sfa {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::argument: return "argument";
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::source: return "source";
        case ErrorKind::empty_video: return "empty-video";
        case ErrorKind::degenerate_region: return "degenerate-region";
        case ErrorKind::encoding: return "encoding";
        case ErrorKind::detection: return "detection";
        case ErrorKind::transport: return "transport";
        case ErrorKind::protocol: return "protocol";
        case ErrorKind::fixture: return "fixture";
        case ErrorKind::answering: return "answering";
        case ErrorKind::manifest: return "manifest";
        case ErrorKind::evaluation: return "evaluation";
    }
    return "unknown";
}

namespace {
std::string compose(ErrorKind kind, const std::string& message, const std::string& stage) {
    std::string out(to_string(kind));
    out += " error";
    if (!stage.empty()) out += " [" + stage + "]";
    out += ": " + message;
    return out;
}
}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::string stage)
    : std::runtime_error(compose(kind, message, stage)),
      kind_(kind),
      stage_(std::move(stage)),
      message_(message) {}

Error Error::at_stage(std::string stage) const { return Error(kind_, message_, std::move(stage)); }

}  // namespace sfa
