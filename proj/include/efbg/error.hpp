#pragma once

#include <stdexcept>
#include <string>

namespace efbg {

// Every error carries a stable kind so the CLI can map it to an exit code.
enum class ErrorKind {
  Shape = 10,
  Domain = 11,
  LengthMismatch = 12,
  DegenerateScale = 13,
  Config = 14,
  Schema = 15,
  Format = 16,
  Io = 17,
  Training = 18,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

#define EFBG_DEFINE_ERROR(Name, Kind)                                     \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

EFBG_DEFINE_ERROR(ShapeError, Shape)
EFBG_DEFINE_ERROR(DomainError, Domain)
EFBG_DEFINE_ERROR(LengthMismatchError, LengthMismatch)
EFBG_DEFINE_ERROR(DegenerateScaleError, DegenerateScale)
EFBG_DEFINE_ERROR(ConfigError, Config)
EFBG_DEFINE_ERROR(SchemaError, Schema)
EFBG_DEFINE_ERROR(FormatError, Format)
EFBG_DEFINE_ERROR(IoError, Io)
EFBG_DEFINE_ERROR(TrainingError, Training)

#undef EFBG_DEFINE_ERROR

}  // namespace efbg
