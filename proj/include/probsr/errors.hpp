// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace probsr
{

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InvalidGridError : public Error
{
public:
  using Error::Error;
};

/// Tensor or field dimensions do not agree.
class ShapeError : public Error
{
public:
  using Error::Error;
};

/// Invalid user configuration (non-positive scales, empty splits, ...).
class ConfigError : public Error
{
public:
  using Error::Error;
};

class SolverError : public Error
{
public:
  SolverError(const std::string &what, double residual, std::int64_t iterations)
    : Error(what), residual_(residual), iterations_(iterations)
  {
  }
  double residual() const { return residual_; }
  std::int64_t iterations() const { return iterations_; }

private:
  double residual_;
  std::int64_t iterations_;
};

/// A Langevin chain produced a non-finite gradient or position.
class DivergenceError : public Error
{
public:
  DivergenceError(const std::string &what, std::int64_t step) : Error(what), step_(step) {}
  std::int64_t step() const { return step_; }

private:
  std::int64_t step_;
};

/// Tape::backward called twice on the same tape.
class TapeReuseError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class MissingFileError : public IoError
{
public:
  using IoError::IoError;
};

/// Bad magic bytes or unsupported version in a binary file.
class FormatError : public Error
{
public:
  using Error::Error;
};

/// Declared and actual payload sizes disagree (truncated or padded file).
class LengthMismatchError : public Error
{
public:
  using Error::Error;
};

class ChecksumError : public Error
{
public:
  using Error::Error;
};

}  // namespace probsr
