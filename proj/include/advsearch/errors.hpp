#pragma once

#include <stdexcept>
#include <string>

namespace advsearch {

// Invalid argument or violated precondition.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Unknown or already-removed id.
class NotFoundError : public std::out_of_range {
 public:
  explicit NotFoundError(const std::string& what) : std::out_of_range(what) {}
};

// Query budget T exhausted.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

// Randomized instance construction gave up.
class InstanceError : public std::runtime_error {
 public:
  explicit InstanceError(const std::string& what) : std::runtime_error(what) {}
};

// Singular or numerically rank-deficient factor where full rank is required.
class RankDeficiencyError : public std::runtime_error {
 public:
  explicit RankDeficiencyError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file or config.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ParameterError(msg);
}

}  // namespace advsearch
