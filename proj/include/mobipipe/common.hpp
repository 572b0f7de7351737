#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mobipipe {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed container or payload (bad magic, bad length-size byte, ...).
struct FormatError : Error {
  using Error::Error;
};

// Input ended inside a declared structure. Carries the byte offset at
// which the parser ran out of data.
struct TruncationError : Error {
  std::size_t offset;
  TruncationError(const std::string& msg, std::size_t off)
      : Error(msg + " (at byte " + std::to_string(off) + ")"), offset(off) {}
};

// Structurally valid input whose content violates the expected schema
// (missing XML fields, bad CSV header, unknown channel format).
struct SchemaError : Error {
  using Error::Error;
};

// A domain-type invariant does not hold (mismatched lengths, empty set).
struct InvariantError : Error {
  using Error::Error;
};

// Bad argument to an operation (cutoff past Nyquist, q outside (0,1)).
struct ParamError : Error {
  using Error::Error;
};

// A requested analysis window falls outside the available data.
struct WindowError : Error {
  using Error::Error;
};

// An event could not be detected for a trial (trial is dropped, logged).
struct DetectionError : Error {
  using Error::Error;
};

// Well-formed input with invalid values (probability row not summing to 1).
struct ValidationError : Error {
  using Error::Error;
};

// Undefined statistical test (all differences zero, constant sample).
struct UndefinedTestError : Error {
  using Error::Error;
};

// Iterative fit failed to converge (divergence after maximal annealing).
struct ConvergenceError : Error {
  using Error::Error;
};

// Collector for non-fatal diagnostics. Functions that can warn accept an
// optional pointer; a null collector silently drops messages.
struct Log {
  std::vector<std::string> lines;
  void warn(const std::string& msg) { lines.push_back("warning: " + msg); }
  void info(const std::string& msg) { lines.push_back(msg); }
};

inline void log_warn(Log* log, const std::string& msg) {
  if (log) log->warn(msg);
}

inline void log_info(Log* log, const std::string& msg) {
  if (log) log->info(msg);
}

}  // namespace mobipipe
