#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfeq {

enum class ErrorKind {
    Input,
    Parameter,
    Data,
    Model,
    Estimation,
    Mode,
    Convergence,
    Divergence,
    Precondition,
    Config,
    Shape,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

// Thrown by iterative solvers; keeps the residual history.
class TraceError : public Error {
  public:
    TraceError(ErrorKind kind, const std::string& what, std::vector<double> trace)
        : Error(kind, what), trace_(std::move(trace)) {}

    const std::vector<double>& trace() const { return trace_; }

  private:
    std::vector<double> trace_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

} // namespace mfeq
