#pragma once

#include <stdexcept>
#include <string>

namespace mspat {

// Exit-code mapping (see tools/): io_error -> 2, parse/config -> 3,
// numerical failure -> 4.
struct invalid_geometry : std::runtime_error {
  explicit invalid_geometry(const std::string& msg) : std::runtime_error(msg) {}
};

struct parse_error : std::runtime_error {
  parse_error(const std::string& msg, long line_no = -1)
      : std::runtime_error(line_no >= 0 ? msg + " (line " + std::to_string(line_no) + ")"
                                        : msg),
        line(line_no) {}
  long line;
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct structural_error : std::runtime_error {
  explicit structural_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mspat
