#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace promptgate {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: dimension mismatch, n > k, empty sets, and so on.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Raised when an identifier (prompt id, member id, dataset tag) collides.
class DuplicateError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::vector<std::size_t> lines = {})
      : Error(what), lines_(std::move(lines)) {}

  // 1-based line numbers of offending records, when the input is line-oriented.
  const std::vector<std::size_t>& lines() const noexcept { return lines_; }

 private:
  std::vector<std::size_t> lines_;
};

// A scorer backend failed (timeout, unreachable, malformed reply).
class BackendError : public Error {
 public:
  BackendError(std::string member_id, const std::string& what)
      : Error("backend '" + member_id + "': " + what), member_id_(std::move(member_id)) {}

  const std::string& member_id() const noexcept { return member_id_; }

 private:
  std::string member_id_;
};

}  // namespace promptgate
