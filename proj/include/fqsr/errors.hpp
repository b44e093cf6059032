#ifndef FQSR_ERRORS_HPP_
#define FQSR_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fqsr {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct ParamError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace fqsr

#endif  // FQSR_ERRORS_HPP_
