#pragma once

#include <stdexcept>
#include <string>

namespace mmclust {

// File or on-disk format problems (bad magic, truncated payloads,
// manifest/feature dimension disagreements). CLI maps these to exit code 2.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: non-finite values escaping an operation, a loss going
// NaN during training, a failed gradient check. CLI maps these to exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace mmclust
