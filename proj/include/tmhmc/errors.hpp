#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tmhmc {

// Base of all recoverable numerical failures. The sampler catches these during
// a proposal, assigns energy +inf and rejects; they never abort a chain.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : Error {
    std::size_t index;
    explicit NotPositiveDefinite(std::size_t i)
        : Error("Cholesky pivot " + std::to_string(i) + " is not positive"), index(i) {}
};

struct NonFinite : Error {
    NonFinite() : Error("non-finite value in evaluation") {}
    explicit NonFinite(const std::string& what) : Error(what) {}
};

struct DomainError : Error {
    using Error::Error;
};

struct MapFailure : Error {
    using Error::Error;
};

struct Unsupported : Error {
    using Error::Error;
};

struct SingularRegression : Error {
    using Error::Error;
};

struct VarianceCollapse : Error {
    using Error::Error;
};

struct OptimFailure : Error {
    using Error::Error;
};

struct DegenerateSeries : Error {
    using Error::Error;
};

// Configuration / data-file problems; carries a 1-based line number when the
// failure is tied to a specific line (0 otherwise).
struct ParseError : Error {
    std::size_t line;
    explicit ParseError(const std::string& what, std::size_t l = 0)
        : Error(l ? what + " (line " + std::to_string(l) + ")" : what), line(l) {}
};

}  // namespace tmhmc
