#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace looptool {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed structure: empty trees, mismatched vector lengths, overlapping buckets.
class StructuralError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// Corrupt input data, e.g. a reference label naming an undeclared tool.
class DataError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

// Backend text that could not be turned into the requested structure.
// The raw response is kept so callers can log it.
class SynthesisError : public Error {
public:
    SynthesisError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool transient)
        : Error(what), transient_(transient) {}

    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

class UnsupportedLogprobsError : public Error {
public:
    using Error::Error;
};

// Mock backend asked for a request fingerprint it has no script entry for.
class LookupError : public Error {
public:
    using Error::Error;
};

// Model output violating the <think>/<tool_call> format. `rule` names the
// first violated rule ("missing tool_call", "unbalanced tags", ...).
class ParseError : public Error {
public:
    ParseError(std::string rule, const std::string& detail)
        : Error(detail.empty() ? rule : rule + ": " + detail), rule_(std::move(rule)) {}

    const std::string& rule() const noexcept { return rule_; }

private:
    std::string rule_;
};

class VerdictParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace looptool
