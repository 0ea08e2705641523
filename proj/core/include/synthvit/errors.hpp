#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synthvit {

// Base for all library errors. Subclasses map onto distinct CLI exit codes:
// ConfigError/SchemaError -> 2, DataError -> 3, anything else -> 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid argument value (rates, ranges, out-of-bounds timesteps).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Bad run configuration: unknown preset, missing checkpoint, invalid section.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Input data is unusable: empty splits, wrong guide-set size, missing files.
class DataError : public Error {
public:
    using Error::Error;
};

// Manifest/JSON does not match the documented schema.
class SchemaError : public Error {
public:
    SchemaError(const std::string& msg, std::size_t line = 0)
        : Error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

// Checkpoint file is corrupt or truncated; carries the byte offset where
// reading failed.
class IntegrityError : public Error {
public:
    IntegrityError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_ = 0;
};

// File is not a decodable image.
class ImageFormatError : public DataError {
public:
    using DataError::DataError;
};

// Fewer candidates than the selection floor.
class ShortageError : public DataError {
public:
    using DataError::DataError;
};

// Filesystem failure while persisting artifacts.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace synthvit
