#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace zsil {

// Base for every error the library raises. `kind()` is the stable,
// machine-readable tag surfaced by the CLI error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct ContractViolation : Error {
    explicit ContractViolation(const std::string& m) : Error("contract_violation", m) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error("format_error", m) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& m) : Error("dimension_mismatch", m) {}
};

// Non-finite values surfaced during training or inference.
struct DiagnosticsError : Error {
    explicit DiagnosticsError(const std::string& m) : Error("diagnostics", m) {}
};

struct DependencyError : Error {
    explicit DependencyError(const std::string& m) : Error("dependency_error", m) {}
};

struct FieldError {
    std::string path;
    std::string message;
};

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<FieldError> errors)
        : Error("config_error", summarize(errors)), errors_(std::move(errors)) {}

    const std::vector<FieldError>& errors() const noexcept { return errors_; }

private:
    static std::string summarize(const std::vector<FieldError>& errors) {
        std::string out = "invalid configuration:";
        for (const auto& e : errors) out += " [" + e.path + ": " + e.message + "]";
        return out;
    }

    std::vector<FieldError> errors_;
};

} // namespace zsil
