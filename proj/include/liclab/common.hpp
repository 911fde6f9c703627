#pragma once

#include <stdexcept>
#include <string>

namespace liclab {

// Error taxonomy. The CLI maps these onto stable exit codes:
// ConfigError -> 1, DataError/FormatError/CompatibilityError -> 2,
// NumericalError -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

struct CompatibilityError : Error {
    explicit CompatibilityError(const std::string& msg) : Error("compatibility error: " + msg) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error("numerical error: " + msg) {}
};

struct ParameterDomainError : Error {
    explicit ParameterDomainError(const std::string& msg) : Error("parameter-domain error: " + msg) {}
};

struct TrainingError : Error {
    explicit TrainingError(const std::string& msg) : Error("training-state error: " + msg) {}
};

struct AnalysisError : Error {
    explicit AnalysisError(const std::string& msg) : Error("analysis error: " + msg) {}
};

struct HarnessError : Error {
    explicit HarnessError(const std::string& msg) : Error("harness error: " + msg) {}
};

}  // namespace liclab
