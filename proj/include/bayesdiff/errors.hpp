#pragma once

#include <stdexcept>
#include <string>

namespace bayesdiff {

// Malformed or inconsistent input files / datasets. CLI exit code 3.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite quantities or unrecoverable numerical failure. CLI exit code 4.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bayesdiff
