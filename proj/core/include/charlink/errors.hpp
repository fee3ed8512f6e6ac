#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace charlink {

/// A malformed row in one of the TSV inputs. `line` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        path_(path),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// A binary artifact (model, index, embeddings) failed validation.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Cosine similarity requested on a zero-norm vector.
class UndefinedSimilarity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// NaN or Inf showed up in a loss or a parameter.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace charlink
