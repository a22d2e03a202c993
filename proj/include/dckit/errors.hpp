#pragma once

#include <stdexcept>
#include <string>

namespace dckit {

// Broad failure families, used by the CLI to pick exit codes:
// io_format -> exit 1, precondition -> exit 2.
enum class ErrorKind { io_format, precondition };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ErrorKind::io_format, what) {}
};

class CorruptionError : public Error {
public:
    explicit CorruptionError(const std::string& what) : Error(ErrorKind::io_format, what) {}
};

class EmptySetError : public Error {
public:
    explicit EmptySetError(const std::string& what) : Error(ErrorKind::io_format, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io_format, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class UndefinedSimilarityError : public Error {
public:
    explicit UndefinedSimilarityError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class DegenerateCenterError : public Error {
public:
    explicit DegenerateCenterError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class InsufficientPointsError : public Error {
public:
    explicit InsufficientPointsError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class MissingAttributeError : public Error {
public:
    explicit MissingAttributeError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class UnmatchedAttributeError : public Error {
public:
    explicit UnmatchedAttributeError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

class SingularStepError : public Error {
public:
    explicit SingularStepError(const std::string& what) : Error(ErrorKind::precondition, what) {}
};

} // namespace dckit
