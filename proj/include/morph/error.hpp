#pragma once

#include <stdexcept>
#include <string>

namespace morph {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the subclasses carry the category.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// Bad or missing configuration, resource table, or data file.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Network / process level failure talking to a model endpoint.
class TransportError : public Error {
public:
    using Error::Error;
};

// The endpoint answered, but the payload broke the wire contract.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace morph
