#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace eit {

// Exit-code mapping used by the CLI: ConfigError and subtypes -> 2,
// NumericError and ContractError -> 3.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Invariant violations found in input data (mesh files, measurement files).
class ValidationError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

// Arguments outside an operation's documented domain.
class DomainError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

// Requested work exceeds a configured budget.
class ResourceError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

// Factorization/solver breakdowns, rank deficiencies, non-finite values.
class NumericError : public Error {
public:
  using Error::Error;
};

// API misuse: mismatched linearization points, wrong dimensions.
class ContractError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void str_impl(std::ostringstream&) {}

template <typename T, typename... Rest>
void str_impl(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  str_impl(os, rest...);
}

}  // namespace detail

// msg("electrode ", m, " has empty patch") -> std::string
template <typename... Args>
std::string msg(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::str_impl(os, args...);
  return os.str();
}

}  // namespace eit
