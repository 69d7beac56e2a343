#pragma once

#include <stdexcept>
#include <string>

namespace kmono {

//! Base class of every error thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Invalid argument or violated precondition.
class ParameterError : public Error
{
public:
  using Error::Error;
};

//! Non-finite or otherwise unusable numerical result.
class NumericError : public Error
{
public:
  using Error::Error;
};

//! A configured resource cap was exceeded.
class ResourceError : public Error
{
public:
  using Error::Error;
};

//! Grids or arrays that do not line up.
class ShapeError : public Error
{
public:
  using Error::Error;
};

//! KL divergence is infinite (reference density vanishes on the support).
class DivergenceError : public NumericError
{
public:
  using NumericError::NumericError;
};

class IoError : public Error
{
public:
  using Error::Error;
};

//! Directory has no manifest.
class NotARunError : public Error
{
public:
  using Error::Error;
};

//! A stored digest does not match the file contents.
class CorruptionError : public Error
{
public:
  using Error::Error;
};

} // namespace kmono
