#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cytofuse {

// Every failure raised by the library derives from Error. The CLI maps
// IoError to exit code 1 and every other Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a domain invariant (simplex, label range, shape agreement,
// unknown names, missing referenced files).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File is well-formed but declares something this tool refuses
// (fortran order, non-float32 payload, rank != 3, ASCII PGM).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes. Carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cytofuse
