#pragma once

#include <stdexcept>
#include <string>

namespace levelcast {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// usage problems are handled by the CLI itself (exit 2); the exceptions
// below map to validation (3), numerical divergence (4) and IO (5).

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; carries the 1-based line number when known.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& msg, long line)
        : ValidationError(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Experiment protocol cannot be satisfied (e.g. too few eligible players).
class ProtocolError : public ValidationError {
public:
    explicit ProtocolError(const std::string& msg) : ValidationError(msg) {}
};

// Incompatible configuration (e.g. method requires feature inputs).
class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// Rank correlation undefined (constant input or fewer than 2 points).
class UndefinedCorrelationError : public ValidationError {
public:
    explicit UndefinedCorrelationError(const std::string& msg) : ValidationError(msg) {}
};

// API misuse: inputs violate a documented precondition.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// MCMC produced a non-finite quantity; reports where.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what_part, long iteration)
        : std::runtime_error("numerical divergence in " + what_part +
                             " at iteration " + std::to_string(iteration)),
          iteration_(iteration) {}
    long iteration() const { return iteration_; }

private:
    long iteration_;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace levelcast
