#ifndef LEVYKIT_ERRORS_HPP
#define LEVYKIT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace levykit {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An integral that should be finite diverged (or could not be shown finite).
class IntegrabilityError : public Error {
public:
    using Error::Error;
};

/// Numerical procedure did not reach its requested tolerance.
class ToleranceError : public Error {
public:
    explicit ToleranceError(const std::string& what, long offending_index = -1)
        : Error(what), index_(offending_index) {}

    /// Series index or refinement level that failed, -1 if not applicable.
    long offending_index() const noexcept { return index_; }

private:
    long index_;
};

/// An eigenfunction series is too short for the requested (gamma, tol).
class TruncationError : public Error {
public:
    TruncationError(const std::string& what, std::size_t minimal_terms)
        : Error(what), minimal_terms_(minimal_terms) {}

    /// Smallest N (highest coefficient index) that satisfies the tail bound.
    std::size_t minimal_terms() const noexcept { return minimal_terms_; }

private:
    std::size_t minimal_terms_;
};

/// Evaluation outside the range covered by tabulated data.
class RangeError : public Error {
public:
    using Error::Error;
};

/// The requested computation is only available for preset diffusions.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Time step too coarse for the requested local-time band.
class ResolutionError : public Error {
public:
    using Error::Error;
};

/// A computed quantity violates a property it must satisfy (e.g. a probability outside [0,1]).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Malformed input document or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace levykit

#endif  // LEVYKIT_ERRORS_HPP
