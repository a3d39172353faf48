#pragma once
#include <stdexcept>
#include <string>

namespace oprl {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidModel : Error {
  explicit InvalidModel(const std::string& what) : Error("invalid-model: " + what) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& what) : Error("index-out-of-range: " + what) {}
};

struct SingularLambda : Error {
  explicit SingularLambda(const std::string& what) : Error("singular-lambda: " + what) {}
};

struct SingularGram : Error {
  explicit SingularGram(const std::string& what) : Error("non-positive-definite-gram: " + what) {}
};

struct EmptyDataset : Error {
  explicit EmptyDataset(const std::string& what) : Error("empty-dataset: " + what) {}
};

struct BudgetExceeded : Error {
  explicit BudgetExceeded(const std::string& what) : Error("budget-exceeded: " + what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error("parse-error: " + what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation-error: " + what) {}
};

struct GenerationError : Error {
  explicit GenerationError(const std::string& what) : Error("generation-budget-exhausted: " + what) {}
};

}  // namespace oprl
