#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace selftalk {

// Failure categories. The CLI maps these onto its exit codes; everything
// below NumericError is a broken internal contract rather than bad input.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ShapeError : NumericError {
  using NumericError::NumericError;
};
struct DomainError : NumericError {
  using NumericError::NumericError;
};
struct IndexError : NumericError {
  using NumericError::NumericError;
};
struct ContractError : NumericError {
  using NumericError::NumericError;
};

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError("shape: " + msg);
}
inline void check_domain(bool ok, const std::string& msg) {
  if (!ok) throw DomainError("domain: " + msg);
}
inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError("contract: " + msg);
}

// Reserved token ids, fixed across vocabulary, agents and file formats.
constexpr int kPadId = 0;
constexpr int kStartId = 1;
constexpr int kStopId = 2;
constexpr int kUnkId = 3;

// 17 significant digits: enough for exact double round-trips in text form.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_int(long long v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld", v);
  return buf;
}

}  // namespace selftalk
