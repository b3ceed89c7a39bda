#pragma once

#include <stdexcept>
#include <string>

namespace hchain {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// AEAD tag check failed: wrong key, or nonce/body/associated data modified.
class AuthenticationFailure : public Error {
public:
    AuthenticationFailure() : Error("authentication failure") {}
    explicit AuthenticationFailure(const std::string& what) : Error(what) {}
};

class EmptyIdentity : public Error {
public:
    EmptyIdentity() : Error("identity must be non-empty") {}
};

class DecodeError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace hchain
