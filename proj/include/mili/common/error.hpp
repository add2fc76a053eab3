#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mili {

// Coarse error category; the CLI prints it as a prefix and maps it to an exit code.
enum class ErrorKind {
  shape,
  numeric,
  world,
  data,
  config,
  io,
  stale,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mili
