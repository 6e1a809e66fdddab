#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace socialveil {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something malformed: bad file, bad field, failed precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// A chat backend could not produce a completion (network, HTTP status,
// missing replay entry, no matching script rule).
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what,
                          std::vector<std::string> attempt_log = {})
      : Error(what), attempt_log_(std::move(attempt_log)) {}

  const std::vector<std::string>& attempt_log() const { return attempt_log_; }

 private:
  std::vector<std::string> attempt_log_;
};

// Model output that does not contain the expected action JSON.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}

  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Judge output stayed malformed after the allowed re-ask.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::vector<std::string> raw_outputs)
      : Error(what), raw_outputs_(std::move(raw_outputs)) {}

  const std::vector<std::string>& raw_outputs() const { return raw_outputs_; }

 private:
  std::vector<std::string> raw_outputs_;
};

// A statistic is undefined for the given data (zero variance and friends).
class StatsError : public Error {
 public:
  using Error::Error;
};

}  // namespace socialveil
