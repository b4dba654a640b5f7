#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace altplan {

/// Vector or matrix sizes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The censored likelihood has no finite maximizer for the given data.
class NonIdentifiable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A factorial schedule was asked for more runs than it holds.
class ScheduleExhausted : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A belief covariance that cannot be factorized when a precision form is needed.
class SingularBelief : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration. Carries one message per offending field.
class ConfigError : public std::invalid_argument {
 public:
  struct Field {
    std::string name;
    std::string message;
  };

  explicit ConfigError(std::vector<Field> fields)
      : std::invalid_argument(Summarize(fields)), fields_(std::move(fields)) {}
  ConfigError(std::string field, std::string message)
      : ConfigError(std::vector<Field>{{std::move(field), std::move(message)}}) {}

  const std::vector<Field>& fields() const noexcept { return fields_; }

 private:
  static std::string Summarize(const std::vector<Field>& fields) {
    std::string out = "invalid configuration";
    for (const auto& f : fields) out += "; " + f.name + ": " + f.message;
    return out;
  }

  std::vector<Field> fields_;
};

}  // namespace altplan
