//===- parser.hpp - textual IR front end -----------------------------------===//
#pragma once

#include "sbound/ir.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace sbound {

class ParseError : public std::runtime_error {
public:
  ParseError(int line, int col, const std::string &msg)
      : std::runtime_error("line " + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + msg),
        line(line), col(col) {}
  int line;
  int col;
};

class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(std::vector<std::string> violations);
  std::vector<std::string> violations;
};

/// Parses and validates a program. Throws ParseError on syntax errors and
/// ValidationError when a structural invariant is violated.
Program parseProgram(const std::string &text);

/// Validation only; violations are returned as data, one string each.
std::vector<std::string> validate(const Program &p);

} // namespace sbound
