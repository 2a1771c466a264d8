#pragma once

#include <stdexcept>

namespace hicenhance {

/// Failure of a numeric procedure on well-formed input (non-finite loss,
/// balancing that cannot converge). Kept distinct from usage/format errors
/// so callers can map the two classes to different exit codes.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hicenhance
