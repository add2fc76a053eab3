#include "mili/common/error.hpp"

namespace mili {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::world: return "world";
    case ErrorKind::data: return "data";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::stale: return "stale-input";
  }
  return "unknown";
}

}  // namespace mili
