#pragma once

#include <stdexcept>
#include <string>

namespace vstab {

// Exit-code families for the CLI. Values are stable; scripts may rely on them.
enum class ErrorCategory : int {
  usage = 1,
  parse = 2,
  validation = 3,
  solver = 4,
  numeric = 5,
  io = 6,
  data = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), category_(cat) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(ErrorCategory::parse, msg) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(ErrorCategory::validation, msg) {}
};

struct UnknownBus : Error {
  explicit UnknownBus(int bus_id)
      : Error(ErrorCategory::validation, "unknown bus id " + std::to_string(bus_id)) {}
};

struct UnobservedBus : Error {
  explicit UnobservedBus(int bus_id)
      : Error(ErrorCategory::validation, "bus " + std::to_string(bus_id) + " is not available from the measurement source") {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& msg) : Error(ErrorCategory::data, msg) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error(ErrorCategory::data, msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(ErrorCategory::numeric, msg) {}
};

// Power flow did not reach the tolerance. Callers that can recover (cpflow
// step control) inspect PowerFlowSolution::converged instead of catching this.
struct NotConverged : Error {
  explicit NotConverged(const std::string& msg) : Error(ErrorCategory::solver, msg) {}
};

struct BaseCaseInfeasible : NotConverged {
  BaseCaseInfeasible() : NotConverged("base case (lambda = 0) does not solve") {}
};

struct TraceStalled : Error {
  explicit TraceStalled(const std::string& msg) : Error(ErrorCategory::solver, msg) {}
};

struct InfeasibleAt : Error {
  explicit InfeasibleAt(int tick)
      : Error(ErrorCategory::solver,
              "schedule drove the system past the nose at tick " + std::to_string(tick)),
        tick(tick) {}
  int tick;
};

struct RankDeficient : Error {
  explicit RankDeficient(const std::string& msg) : Error(ErrorCategory::numeric, msg) {}
};

struct InsufficientExcursion : Error {
  explicit InsufficientExcursion(const std::string& msg) : Error(ErrorCategory::data, msg) {}
};

struct ZeroReference : Error {
  explicit ZeroReference(const std::string& msg) : Error(ErrorCategory::data, msg) {}
};

struct EmptyRequest : Error {
  explicit EmptyRequest(const std::string& msg) : Error(ErrorCategory::usage, msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorCategory::io, msg) {}
};

}  // namespace vstab
