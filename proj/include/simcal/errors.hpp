#pragma once

#include <stdexcept>
#include <string>

namespace simcal {

struct RangeViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Event budget exceeded; larger block/buffer sizes reduce the event count.
struct GranularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyTraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CalibrationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace simcal
