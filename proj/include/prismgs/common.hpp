// Copyright Contributors to the PrismGS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace prismgs {

template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar> using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

// Error hierarchy. Every failure the library reports derives from Error so
// callers can catch one type at the top level.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A value outside the documented domain of an operation.
class InvalidInput : public Error {
  public:
    using Error::Error;
};

/// Malformed file content. Carries the 1-based line number when known.
class FormatError : public Error {
  public:
    FormatError(const std::string &what, int line = 0)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), mLine(line) {}
    int line() const { return mLine; }

  private:
    int mLine;
};

/// Parsed successfully but violates a semantic constraint.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Caller broke a pairing contract (shape mismatch, stale forward state).
class ContractViolation : public Error {
  public:
    using Error::Error;
};

/// The configuration cannot be satisfied by the data.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Checkpoint written by an incompatible format version.
class VersionMismatch : public Error {
  public:
    using Error::Error;
};

} // namespace prismgs
