#pragma once

#include <stdexcept>
#include <string>

namespace ckrank {

// Precondition violations (bad call, exit code 2 territory in the CLI).
struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct KeyMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ZeroDenominator : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// All retained covariance mass is below threshold; callers may fall back.
struct ZeroVariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed external input (exit code 1 territory). Message names file and line.
struct ParseError : std::runtime_error {
    ParseError(std::string file, long line, const std::string& what)
        : std::runtime_error(file + (line >= 0 ? ":" + std::to_string(line) : "") + ": " + what),
          file_(std::move(file)),
          line_(line) {}

    const std::string& file() const { return file_; }
    long line() const { return line_; }

private:
    std::string file_;
    long line_;
};

struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace ckrank
