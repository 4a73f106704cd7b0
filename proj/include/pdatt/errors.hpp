#pragma once

#include <stdexcept>
#include <string>

namespace pdatt {

// exit-code classes used by the cli: config=2, data=3, numerical=4
enum class ErrorKind { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& msg)
      : std::runtime_error(module + ": " + msg), kind_(kind), module_(std::move(module)) {}
  ErrorKind kind() const { return kind_; }
  const std::string& module() const { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

struct ConfigError : Error {
  ConfigError(const std::string& module, const std::string& msg)
      : Error(ErrorKind::Config, module, msg) {}
};

struct DataError : Error {
  DataError(const std::string& module, const std::string& msg)
      : Error(ErrorKind::Data, module, msg) {}
};

// malformed csv content; row is the 1-based data row (header excluded)
struct ParseError : DataError {
  ParseError(long row, const std::string& msg)
      : DataError("panel_data", "row " + std::to_string(row) + ": " + msg), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

// a required estimation cell has no observations
struct EmptyCellError : DataError {
  explicit EmptyCellError(const std::string& msg) : DataError("estimators", msg) {}
};

struct NumericalError : Error {
  NumericalError(const std::string& module, const std::string& msg)
      : Error(ErrorKind::Numerical, module, msg) {}
};

// one-class outcome in a logit subsample
struct DegenerateOutcomeError : NumericalError {
  explicit DegenerateOutcomeError(const std::string& msg) : NumericalError("first_stage", msg) {}
};

}  // namespace pdatt
