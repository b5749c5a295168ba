#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace bizmodel {

/// Base error for all library failures. Stage code is filled in by the
/// orchestrator when the error crosses a pipeline stage boundary.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Warnings go through a replaceable sink so tests can capture them.
using WarningSink = std::function<void(const std::string&)>;

void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

} // namespace bizmodel
