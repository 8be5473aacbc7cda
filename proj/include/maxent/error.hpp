#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maxent {

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error
{
  public:
    ParseError(const std::string& msg, std::size_t row, std::size_t col = npos)
        : Error(msg), row_(row), col_(col) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t row() const { return row_; }
    std::size_t col() const { return col_; }

  private:
    std::size_t row_;
    std::size_t col_;
};

class EmptyInput : public Error { using Error::Error; };
class InvalidArgument : public Error { using Error::Error; };
class ShapeMismatch : public Error { using Error::Error; };

class DegenerateRow : public Error
{
  public:
    DegenerateRow(const std::string& msg, std::size_t row) : Error(msg), row_(row) {}
    std::size_t row() const { return row_; }

  private:
    std::size_t row_;
};

class InvalidGrid : public Error { using Error::Error; };
class DegenerateQuantiles : public Error { using Error::Error; };
class OutOfSupport : public Error { using Error::Error; };
class SupportError : public Error { using Error::Error; };
class NotCalibrated : public Error { using Error::Error; };
class InsufficientSample : public Error { using Error::Error; };

class DivergentPartition : public Error
{
  public:
    explicit DivergentPartition(const std::string& msg,
                                std::size_t row = npos, std::size_t col = npos)
        : Error(msg), row_(row), col_(col) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t row() const { return row_; }
    std::size_t col() const { return col_; }

  private:
    std::size_t row_;
    std::size_t col_;
};

class InfeasibleConstraints : public Error { using Error::Error; };
class Unconverged : public Error { using Error::Error; };
class OracleTooLarge : public Error { using Error::Error; };

class SingularCorrelation : public Error { using Error::Error; };
class DegenerateFrontier : public Error { using Error::Error; };
class DegenerateWindow : public Error { using Error::Error; };

} // namespace maxent
