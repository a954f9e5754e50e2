#pragma once

#include <stdexcept>
#include <string>

namespace stpnrca {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

/// Base of all library errors; carries the exit code the CLI should report.
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad arguments, bad configuration keys, precondition violations by the caller.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ExitCode::usage, what) {}
};

/// Malformed or unsuitable input data (ragged CSV, constant channel, short series).
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// Numerical failure (unstable system, rank deficiency, non-finite result).
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ExitCode::numerical, what) {}
};

}  // namespace stpnrca
