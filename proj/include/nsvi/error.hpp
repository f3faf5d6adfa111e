#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nsvi {

enum class ErrorKind {
    Config,     // invalid scenario or parameters
    Domain,     // argument outside an operation's domain
    Numerical,  // iteration failed to converge
    Io,         // file system failures
    Invariant,  // internal invariant violated (a bug)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Configuration error. Carries every problem found, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(ErrorKind::Config, join(problems)), problems_(std::move(problems)) {}
    explicit ConfigError(const std::string& problem)
        : ConfigError(std::vector<std::string>{problem}) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) out += "\n";
            out += items[i];
        }
        return out;
    }
    std::vector<std::string> problems_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

/// Non-convergence. `residuals` names the quantities that failed to reach tolerance.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::vector<std::pair<std::string, double>> residuals = {})
        : Error(ErrorKind::Numerical, what), residuals_(std::move(residuals)) {}

    const std::vector<std::pair<std::string, double>>& residuals() const noexcept { return residuals_; }

private:
    std::vector<std::pair<std::string, double>> residuals_;
};

class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(ErrorKind::Io, path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

}  // namespace nsvi
