#pragma once

#include <stdexcept>
#include <string>

namespace logfid {

/// Broad failure category; the CLI maps these onto exit codes.
enum class ErrorKind {
  Config,      // invalid hyperparameters or insufficient data for a split
  Degenerate,  // empty / meaningless input to an operation
  Contract,    // caller violated a precondition (bad symbol, wrong shape)
  State,       // object used before initialization
  Numeric,     // non-finite values during training or scoring
  Format,      // malformed or version-incompatible file
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DegenerateInputError : Error {
  explicit DegenerateInputError(const std::string& w)
      : Error(ErrorKind::Degenerate, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::Contract, w) {}
};
struct StateError : Error {
  explicit StateError(const std::string& w) : Error(ErrorKind::State, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

}  // namespace logfid
