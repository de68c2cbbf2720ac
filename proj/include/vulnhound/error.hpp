#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vulnhound {

// Broad failure classes; the CLI maps these onto exit codes 1/2/3.
enum class ErrorClass { Usage, Data, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorClass::Usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::Data, what) {}
};

// Input bytes are not well-formed UTF-8.
class EncodingError : public DataError {
 public:
  explicit EncodingError(std::size_t offset)
      : DataError("invalid UTF-8 at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace vulnhound
