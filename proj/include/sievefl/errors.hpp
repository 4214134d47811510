#pragma once

#include <stdexcept>
#include <string>

namespace sievefl {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (dimension mismatch, invalid weights, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Missing or malformed user input (bundle files, ground truth, run logs).
class InputError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

/// The coverage report for a bug does not exist; the pipeline falls back to V0.
class CoverageUnavailable : public Error {
public:
    using Error::Error;
};

/// Retriable failure talking to a remote backend (connection refused, timeout).
class TransportError : public Error {
public:
    using Error::Error;
};

/// Backend answered with a non-success HTTP status.
class BackendError : public Error {
public:
    BackendError(int status, const std::string& body_excerpt)
        : Error("backend returned HTTP " + std::to_string(status) + ": " + body_excerpt),
          status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Transport retries exhausted.
class BackendUnavailable : public Error {
public:
    using Error::Error;
};

class VerdictUnparseable : public ParseError {
public:
    using ParseError::ParseError;
};

class RankingUnparseable : public ParseError {
public:
    using ParseError::ParseError;
};

/// top_k on an index with no entries; distinct from a query with no matches.
class EmptyIndexError : public Error {
public:
    using Error::Error;
};

}  // namespace sievefl
