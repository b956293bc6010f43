#pragma once

#include <stdexcept>
#include <string>

namespace mctseg {

/// Base class for every error raised by the toolkit.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (images, labels, manifests, checkpoints).
class data_error : public error {
public:
    using error::error;
};

/// Invalid configuration value or precondition violation by the caller.
class config_error : public error {
public:
    using error::error;
};

/// Training produced a non-finite loss.
class divergence_error : public error {
public:
    using error::error;
};

} // namespace mctseg
