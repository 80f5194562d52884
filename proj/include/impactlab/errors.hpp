#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace impactlab {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Result would not be representable as a finite double.
class OverflowError : public std::overflow_error {
  public:
    using std::overflow_error::overflow_error;
};

/// Series or quadrature failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Circulant spectrum has negative entries beyond the clipping tolerance.
class EmbeddingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A central aggregated-impact bin holds too few paths for a slope estimate.
class BinPopulationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Failure inside one Monte-Carlo path; carries the path index.
class PathError : public std::runtime_error {
  public:
    PathError(std::uint64_t path, const std::string& what)
        : std::runtime_error("path " + std::to_string(path) + ": " + what), path_(path) {}
    std::uint64_t path() const noexcept { return path_; }

  private:
    std::uint64_t path_;
};

/// Configuration problem. `key` and `line` identify the offending entry
/// (line is 0 for overrides that did not come from a file).
class ConfigError : public std::runtime_error {
  public:
    enum class Kind { unknown_key, type_mismatch, constraint_violation, syntax };

    ConfigError(Kind kind, std::string key, int line, const std::string& message)
        : std::runtime_error(format(key, line, message)),
          kind_(kind),
          key_(std::move(key)),
          line_(line) {}

    Kind kind() const noexcept { return kind_; }
    const std::string& key() const noexcept { return key_; }
    int line() const noexcept { return line_; }

  private:
    static std::string format(const std::string& key, int line, const std::string& message) {
        std::string out = "config";
        if (line > 0) out += " line " + std::to_string(line);
        if (!key.empty()) out += " key '" + key + "'";
        return out + ": " + message;
    }

    Kind kind_;
    std::string key_;
    int line_;
};

}  // namespace impactlab
