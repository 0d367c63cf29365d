#pragma once

#include <stdexcept>
#include <string>

namespace dspsd {

// Tensor or vector dimensions disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A node, account, or model entry was looked up but does not exist.
class NotFoundError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Invalid or inconsistent configuration. The CLI maps this to exit code 3.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numeric routine produced or received a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dspsd
