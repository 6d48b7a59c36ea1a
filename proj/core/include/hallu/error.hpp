#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hallu {

/// Input that violates a schema or contract (bad JSONL, unknown label, bad config).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A JSONL ingestion failure tied to a 1-based line number.
class CorpusError : public ValidationError {
public:
    CorpusError(std::size_t line, const std::string& what)
        : ValidationError(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A statistic that is undefined for the given input (constant vector, single class, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Transport-level failure talking to an external judge service.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hallu
