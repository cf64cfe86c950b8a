#pragma once

#include <stdexcept>
#include <string>

namespace mpo {

/// Base of every error thrown by the library. `exit_code()` is what the CLI
/// returns when the error escapes a command.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 1; }
};

/// Malformed arguments or tensors whose shapes do not fit the model.
class InputError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

/// Anything wrong with bytes read from disk.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

class ParseError : public DataError {
public:
    enum class Kind { bad_magic, truncated, count_mismatch, bad_label, bad_length, bad_header };
    ParseError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class SnapshotError : public DataError {
public:
    enum class Kind { bad_magic, version, crc, length };
    SnapshotError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// phi_right is (numerically) parallel to w_up, or w_up vanished.
class DegenerateDirectionError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

/// Black/white accuracy difference requested on a single-class mask.
class DiffUndefinedError : public Error {
public:
    using Error::Error;
};

}  // namespace mpo
