#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flq {

// Exit codes used by the CLI: 2 config, 3 prerequisite, 4 numerical.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure mid-run (NaN/negative density/non-finite loss).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what, std::int64_t step = -1)
        : std::runtime_error(what), step_index(step) {}
    std::int64_t step_index;
};

} // namespace flq
