#pragma once

#include <stdexcept>

namespace falcon {

/// Base class of every exception thrown by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape, rank, index, divisibility, or geometry violation.
struct shape_error : error {
    using error::error;
};

/// Malformed tensor file or architecture config.
struct format_error : error {
    using error::error;
};

/// Kernel fitting failure: invalid rank or a diverged optimization.
struct fit_error : error {
    using error::error;
};

} // namespace falcon
