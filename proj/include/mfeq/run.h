#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mfeq/config.h"

namespace mfeq {

struct Artifact {
    std::string file;
    bool partial = false;
};

struct CheckOutcome {
    std::string name;
    bool passed = true;
    std::string detail;
};

struct RunResult {
    int status = 0; // 0 all checks passed, 1 a check failed, 2 error
    std::vector<Artifact> artifacts;
    std::vector<CheckOutcome> checks;
    std::vector<std::string> warnings;
    std::string error;
};

// Executes the command, writing artifacts and manifest.txt into out_dir.
RunResult run(const RunSpec& spec, std::ostream* log = nullptr);

} // namespace mfeq
