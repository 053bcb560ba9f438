#pragma once

#include <stdexcept>
#include <string>

namespace tfn {

// Root of every error the engine raises. The CLI maps the concrete
// subclasses onto its stable exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Tensor/array dimensions disagree.
class SizeError : public Error {
public:
  using Error::Error;
};

// Convolution/pooling window does not tile the input.
class GeometryError : public Error {
public:
  using Error::Error;
};

// Layer used out of order (e.g. backward before forward).
class StateError : public Error {
public:
  using Error::Error;
};

// Batch statistics over fewer than two elements.
class DegenerateBatchError : public Error {
public:
  using Error::Error;
};

// Non-finite values detected by a debug check.
class NumericError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

class LabelError : public DataError {
public:
  using DataError::DataError;
};

class IndexError : public DataError {
public:
  using DataError::DataError;
};

class StratificationError : public DataError {
public:
  using DataError::DataError;
};

// Unsupported or truncated image file.
class ImageFormatError : public DataError {
public:
  using DataError::DataError;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Corrupt or truncated checkpoint.
class FormatError : public Error {
public:
  using Error::Error;
};

class VersionError : public FormatError {
public:
  using FormatError::FormatError;
};

} // namespace tfn
