#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace krigspline {

/// Base class for every error raised by the library. `stage()` names the
/// pipeline step that failed so front ends can print one labelled line.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what, std::string stage = {})
      : std::runtime_error(what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

  void set_stage(std::string stage) { stage_ = std::move(stage); }

private:
  std::string stage_;
};

/// A documented precondition was violated by the caller.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

class DuplicateSite : public Error {
public:
  using Error::Error;
};

class EmptyRowOrColumn : public Error {
public:
  using Error::Error;
};

class NoPairs : public Error {
public:
  using Error::Error;
};

class DegenerateVariogram : public Error {
public:
  using Error::Error;
};

class RankDeficientDrift : public Error {
public:
  using Error::Error;
};

class CollinearSites : public Error {
public:
  using Error::Error;
};

/// Reciprocal condition estimate of a linear system fell below the gate.
class IllConditioned : public Error {
public:
  IllConditioned(const std::string& what, double rcond)
      : Error(what), rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

private:
  double rcond_;
};

class NotPositiveDefinite : public Error {
public:
  using Error::Error;
};

class ZeroSigma : public Error {
public:
  ZeroSigma(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// A leave-one-out refit failed; `index()` is the deleted observation.
class FitFailure : public Error {
public:
  FitFailure(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what, "parse"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string& what) : Error(what, "usage") {}
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace krigspline
