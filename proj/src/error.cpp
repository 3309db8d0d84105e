#include "efbg/error.hpp"

namespace efbg {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::LengthMismatch: return "length_mismatch";
    case ErrorKind::DegenerateScale: return "degenerate_scale";
    case ErrorKind::Config: return "config";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Training: return "training";
  }
  return "unknown";
}

}  // namespace efbg
