#ifndef STEERING_LAB_ERRORS_HPP
#define STEERING_LAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace steering_lab {

// Every library failure carries a short machine-readable class name so the
// CLI can print it on a single line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct SingularResolutionError : Error {
  explicit SingularResolutionError(const std::string& what) : Error("singular_resolution", what) {}
};

struct CutoffError : Error {
  explicit CutoffError(const std::string& what) : Error("cutoff", what) {}
};

struct NormalizationError : Error {
  explicit NormalizationError(const std::string& what) : Error("normalization", what) {}
};

struct IndeterminateError : Error {
  explicit IndeterminateError(const std::string& what) : Error("indeterminate", what) {}
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct FitError : Error {
  explicit FitError(const std::string& what) : Error("fit", what) {}
};

struct ExtractionError : Error {
  explicit ExtractionError(const std::string& what) : Error("extraction", what) {}
};

}  // namespace steering_lab

#endif  // STEERING_LAB_ERRORS_HPP
