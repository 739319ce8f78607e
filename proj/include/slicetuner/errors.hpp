#pragma once

#include <stdexcept>
#include <string>

namespace slicetuner {

// Exit codes used by the command line tool. Every error type below maps to one.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    oracle = 3,
    numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

// Bad arguments to a library call (empty lists, size mismatches, ...).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(ExitCode::config, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::config, what) {}
};

// Raised by the curve fitter when there are fewer points than parameters.
class InsufficientData : public Error {
public:
    explicit InsufficientData(const std::string& what) : Error(ExitCode::numerical, what) {}
};

// Raised by the curve fitter when every observed loss is zero.
class DegenerateFit : public Error {
public:
    explicit DegenerateFit(const std::string& what) : Error(ExitCode::numerical, what) {}
};

class InvalidProblem : public Error {
public:
    explicit InvalidProblem(const std::string& what) : Error(ExitCode::numerical, what) {}
};

class OracleError : public Error {
public:
    explicit OracleError(const std::string& what) : Error(ExitCode::oracle, what) {}
};

class PoolExhausted : public OracleError {
public:
    PoolExhausted(const std::string& slice_id, const std::string& what)
        : OracleError(what), slice_id_(slice_id) {}
    const std::string& slice_id() const noexcept { return slice_id_; }

private:
    std::string slice_id_;
};

class TrainerTimeout : public OracleError {
public:
    using OracleError::OracleError;
};

class TrainerCrashed : public OracleError {
public:
    using OracleError::OracleError;
};

// Malformed or out-of-order trainer response. The raw line is kept for diagnostics.
class ProtocolError : public OracleError {
public:
    ProtocolError(const std::string& what, std::string raw)
        : OracleError(what), raw_(std::move(raw)) {}
    const std::string& raw_payload() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace slicetuner
