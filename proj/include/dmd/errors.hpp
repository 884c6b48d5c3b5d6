#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmd {

/// Base for every recoverable pipeline error; `code()` is a stable short name
/// used in CLI structured error output.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("ParseError", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

#define DMD_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name, what) {}    \
  }

DMD_DEFINE_ERROR(DuplicateImageName);
DMD_DEFINE_ERROR(VersionMismatch);
DMD_DEFINE_ERROR(DegenerateTrajectory);
DMD_DEFINE_ERROR(IndexOutOfRange);
DMD_DEFINE_ERROR(ZeroAction);
DMD_DEFINE_ERROR(MissingScale);
DMD_DEFINE_ERROR(DimensionMismatch);
DMD_DEFINE_ERROR(EmptyDataset);
DMD_DEFINE_ERROR(MixedActionDims);
DMD_DEFINE_ERROR(NotUnit);
DMD_DEFINE_ERROR(EmptyTestSet);
DMD_DEFINE_ERROR(PlanReuse);
DMD_DEFINE_ERROR(ConfigError);
DMD_DEFINE_ERROR(MissingInput);
DMD_DEFINE_ERROR(InvalidSpec);

#undef DMD_DEFINE_ERROR

class SynthesizerError : public Error {
 public:
  enum class Kind { Unavailable, MalformedResponse, DimensionMismatch };

  SynthesizerError(Kind kind, const std::string& what)
      : Error("SynthesizerError", std::string(kind_name(kind)) + ": " + what), kind_(kind) {}
  Kind kind() const { return kind_; }

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::Unavailable:
        return "unavailable";
      case Kind::MalformedResponse:
        return "malformed-response";
      case Kind::DimensionMismatch:
        return "dimension-mismatch";
    }
    return "unknown";
  }

 private:
  Kind kind_;
};

}  // namespace dmd
