#pragma once

#include <stdexcept>
#include <string>

namespace toyvlm {

// Error taxonomy shared by the library and the CLI exit-code mapping.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    int line_number;
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace toyvlm
