// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sherry {

/// Base of every error thrown by the library. The `exit_code()` mapping is
/// what the command-line tool returns: 1 malformed input, 2 constraint
/// violation, 3 I/O failure.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept = 0;
};

/// Malformed input: bad magic, truncated container, invalid code unit.
class FormatError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

/// A well-formed request that violates a structural constraint
/// (shape mismatch, d_in % 4 != 0, invalid granularity, ...).
class ConstraintError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

namespace detail {

template <class E>
[[noreturn]] inline void fail(const std::string &what) {
  throw E(what);
}

template <class E>
inline void require(bool cond, const std::string &what) {
  if (!cond)
    throw E(what);
}

} // namespace detail
} // namespace sherry
