#pragma once

#include <stdexcept>
#include <string>

namespace hvc {

struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error
{
  using Error::Error;
};

// No crop pair met the overlap requirement; the caller skips the image.
struct RetriesExhausted : Error
{
  using Error::Error;
};

struct StoreMismatch : Error
{
  using Error::Error;
};

struct NonFiniteGradient : Error
{
  NonFiniteGradient(const std::string& param)
    : Error("non-finite gradient in parameter '" + param + "'")
    , parameter(param)
  {
  }

  std::string parameter;
};

struct DegenerateBatch : Error
{
  using Error::Error;
};

struct EmptyNegativeSet : Error
{
  using Error::Error;
};

struct ConfigError : Error
{
  using Error::Error;
};

struct IoError : Error
{
  using Error::Error;
};

} /* namespace hvc */
