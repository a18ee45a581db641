#pragma once

#include <stdexcept>
#include <string>

namespace ciegad {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
    using Error::Error;
};

struct DegenerateVectorError : Error {
    using Error::Error;
};

struct EmptySetError : Error {
    using Error::Error;
};

struct InsufficientDataError : Error {
    using Error::Error;
};

struct InvalidMatrixError : Error {
    using Error::Error;
};

struct DegenerateClusterError : Error {
    using Error::Error;
};

struct DegenerateDirectionError : Error {
    using Error::Error;
};

// Carries the raw backend reply so retry logic can log or re-ask.
struct ParseError : Error {
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_reply(std::move(raw)) {}
    std::string raw_reply;
};

struct BackendUnavailableError : Error {
    using Error::Error;
};

struct MalformedGenerationError : Error {
    using Error::Error;
};

struct InvalidScoresError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IngestError : Error {
    using Error::Error;
};

}  // namespace ciegad
