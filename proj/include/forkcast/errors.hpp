#pragma once

#include <stdexcept>
#include <string>

namespace forkcast {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Data ingestion.
struct FormatError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DuplicateError : Error { using Error::Error; };
struct SeriesTooShort : Error { using Error::Error; };

// Tensor engine and model plumbing.
struct ShapeError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };

// Training and evaluation.
struct EmptyLossError : Error { using Error::Error; };
struct SamplerError : Error { using Error::Error; };
struct UndefinedMetricError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };

}  // namespace forkcast
