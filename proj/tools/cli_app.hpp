#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sfa/error.hpp"

namespace sfa::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kConfiguration = 3,
    kArgument = 4,
    kSource = 5,
    kEmptyVideo = 6,
    kDegenerateRegion = 7,
    kEncoding = 8,
    kDetection = 9,
    kTransport = 10,
    kProtocol = 11,
    kFixture = 12,
    kAnswering = 13,
    kManifest = 14,
    kEvaluation = 15,
};

int exit_code_for(ErrorKind kind) noexcept;
std::string exit_code_table();

/// Entry point shared by the `sfa` binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfa::cli
