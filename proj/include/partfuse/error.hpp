#pragma once

#include <stdexcept>
#include <string>

namespace partfuse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class DegenerateNeuronError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

// Raised by the checkpoint and IDX readers. field() names the part of the
// input that was rejected (e.g. "magic", "dims[2]", "weights[1]").
class ParseError : public Error {
public:
    ParseError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

}  // namespace partfuse
