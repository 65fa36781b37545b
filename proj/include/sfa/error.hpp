#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sfa {

enum class ErrorKind {
    argument,
    configuration,
    source,
    empty_video,
    degenerate_region,
    encoding,
    detection,
    transport,
    protocol,
    fixture,
    answering,
    manifest,
    evaluation,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `stage` names the pipeline stage the
/// error surfaced in ("sample", "detect", "scan", ...); empty outside a run.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string stage = {});

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& stage() const noexcept { return stage_; }

    /// Copy of this error re-tagged with a stage name.
    Error at_stage(std::string stage) const;

private:
    ErrorKind kind_;
    std::string stage_;
    std::string message_;
};

}  // namespace sfa
