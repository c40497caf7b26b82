#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qdgrasp {

    /// Vector or matrix of the wrong length for the scene it is used with.
    struct DimensionError : std::invalid_argument {
        using std::invalid_argument::invalid_argument;
    };

    /// Value outside its admissible range (joint limits, genes outside [0,1], ...).
    struct DomainError : std::domain_error {
        using std::domain_error::domain_error;
    };

    struct PreconditionError : std::logic_error {
        using std::logic_error::logic_error;
    };

    struct UndefinedCorrelationError : std::domain_error {
        using std::domain_error::domain_error;
    };

    /// Bad user configuration (CLI flags, config files, scene documents).
    struct ConfigError : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    /// Malformed data file. `line()` is 1-based, 0 when not applicable.
    class ParseError : public std::runtime_error {
    public:
        ParseError(const std::string& what, std::size_t line)
            : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), _line(line) {}

        std::size_t line() const { return _line; }

    private:
        std::size_t _line;
    };

    struct UnsupportedVersionError : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

} // namespace qdgrasp
