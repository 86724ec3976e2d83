#pragma once

#include <stdexcept>
#include <string>

namespace fedbench {

// Invalid experiment or model configuration (bad shapes, unknown keys, ...).
// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A ForwardTrace was used after the model it came from was mutated.
class InvalidTraceError : public std::runtime_error {
public:
    explicit InvalidTraceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerically meaningless input (zero-norm vector fed to cosine similarity,
// empty dataset, ...).
class DegenerateInputError : public std::runtime_error {
public:
    explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format / filesystem failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training blew up (non-finite loss) or a strategy hook failed mid-run.
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fedbench
