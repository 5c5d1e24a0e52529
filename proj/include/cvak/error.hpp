#pragma once

#include <stdexcept>
#include <string>

namespace cvak {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for a primitive.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A configuration violates its invariants.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// A binary file (dataset or checkpoint) could not be parsed.
class FormatError : public Error {
public:
    enum class Code { io, bad_magic, bad_version, truncated, non_finite, bad_value };

    FormatError(Code code, const std::string& what) : Error(what), code_(code) {}

    [[nodiscard]] Code code() const noexcept { return code_; }

private:
    Code code_;
};

} // namespace cvak
