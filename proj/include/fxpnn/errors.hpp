#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fxpnn {

/// Malformed model or constellation file.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& detail, const std::string& source = {})
        : std::runtime_error((source.empty() ? "" : source + ":") + "line " + std::to_string(line) +
                             ": " + detail),
          line_(line), detail_(detail)
    {}
    std::size_t line() const { return line_; }
    const std::string& detail() const { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

/// The training loss became non-finite.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fxpnn
