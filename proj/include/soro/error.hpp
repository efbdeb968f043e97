#pragma once

#include <stdexcept>
#include <string>

namespace soro {

/// Base class for every error raised by the library. `code()` is a short
/// machine-parsable identifier used by the command-line front end.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define SORO_DEFINE_ERROR(Name, code_str)                                    \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(code_str, what) {}    \
    };

SORO_DEFINE_ERROR(OutOfDomainError, "out_of_domain")
SORO_DEFINE_ERROR(NumericError, "numeric")
SORO_DEFINE_ERROR(InversionError, "inversion")
SORO_DEFINE_ERROR(ParameterError, "parameter")
SORO_DEFINE_ERROR(DomainError, "domain")
SORO_DEFINE_ERROR(ConfigError, "config")
SORO_DEFINE_ERROR(ParseError, "parse")
SORO_DEFINE_ERROR(ValidationError, "validation")
SORO_DEFINE_ERROR(FormatError, "format")
SORO_DEFINE_ERROR(IoError, "io")
SORO_DEFINE_ERROR(CapacityError, "capacity")
SORO_DEFINE_ERROR(FitError, "fit")
SORO_DEFINE_ERROR(DegenerateDesignError, "degenerate_design")

#undef SORO_DEFINE_ERROR

}  // namespace soro
