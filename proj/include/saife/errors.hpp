#pragma once

#include <stdexcept>
#include <string>

namespace saife {

// Base for every error raised by the library. The CLI maps subclasses onto
// distinct exit codes (see src/cli.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long batch_index)
        : Error(what), batch_index_(batch_index) {}
    long batch_index() const { return batch_index_; }

private:
    long batch_index_;
};

// Sensor API failures carry the request descriptor that produced them.
class FetchError : public Error {
public:
    FetchError(const std::string& what, std::string request)
        : Error(what + " [" + request + "]"), request_(std::move(request)) {}
    const std::string& request() const { return request_; }

private:
    std::string request_;
};

class AuthError : public FetchError {
public:
    using FetchError::FetchError;
};

class MalformedResponseError : public FetchError {
public:
    using FetchError::FetchError;
};

class TimeoutError : public FetchError {
public:
    using FetchError::FetchError;
};

}  // namespace saife
