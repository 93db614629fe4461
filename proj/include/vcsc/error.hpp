#pragma once

#include <stdexcept>
#include <string>

namespace vcsc {

/// Base exception for all engine errors. `kind` lets the HTTP layer map
/// failures onto status codes without string matching.
class Error : public std::runtime_error {
 public:
  enum class Kind { invalid_argument, not_found, conflict, numerical, io };

  explicit Error(const std::string& what, Kind kind = Kind::invalid_argument)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vcsc
