#pragma once

#include <stdexcept>
#include <string>

namespace trilevel {

/// Raised when instance or model data violates a structural invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a reformulation is asked to handle a strong trilevel
/// structure (bottom level coupled to middle-level variables).
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure in a text program file; carries the 1-based position.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column)
      : std::runtime_error(what + " (line " + std::to_string(line) + ", col " +
                           std::to_string(column) + ")"),
        line(line),
        column(column) {}
  int line;
  int column;
};

enum class Sense { Le, Eq, Ge };

inline const char* sense_str(Sense s) {
  switch (s) {
    case Sense::Le: return "LE";
    case Sense::Eq: return "EQ";
    case Sense::Ge: return "GE";
  }
  return "?";
}

}  // namespace trilevel
