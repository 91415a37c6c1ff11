#ifndef SYNCKERNEL_ERROR_HPP
#define SYNCKERNEL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace synckernel {

/// Exit-code category a failure maps to in the command-line front end.
enum class ErrorKind { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

// data / format
class FormatError : public DataError {
    using DataError::DataError;
};
class BadMagicError : public FormatError {
    using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
    using FormatError::FormatError;
};
class TruncatedError : public FormatError {
    using FormatError::FormatError;
};
class NonFiniteError : public DataError {
    using DataError::DataError;
};
class DimensionError : public DataError {
    using DataError::DataError;
};
class ZeroVarianceError : public DataError {
    using DataError::DataError;
};
class MissingScoreError : public DataError {
    using DataError::DataError;
};
class DuplicateSubjectError : public DataError {
    using DataError::DataError;
};
class UnreadableFileError : public DataError {
    using DataError::DataError;
};

// numerical / degeneracy
class DegenerateError : public NumericalError {
    using NumericalError::NumericalError;
};
class SvdError : public NumericalError {
    using NumericalError::NumericalError;
};
class SelectionError : public NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace synckernel

#endif  // SYNCKERNEL_ERROR_HPP
