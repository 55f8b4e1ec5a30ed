#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vectorplus {

// Base of every error raised by the library. Subclasses carry a stable `kind`
// string so the CLI and the Python bindings can report failures uniformly.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define VECTORPLUS_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

// chem
class LexError : public Error {
 public:
  LexError(std::size_t position, char character)
      : Error("LexError", "unexpected character '" + std::string(1, character) +
                              "' at position " + std::to_string(position)),
        position_(position),
        character_(character) {}
  LexError(std::size_t position, const std::string& message)
      : Error("LexError", message + " at position " + std::to_string(position)),
        position_(position),
        character_('\0') {}

  std::size_t position() const noexcept { return position_; }
  char character() const noexcept { return character_; }

 private:
  std::size_t position_;
  char character_;
};

VECTORPLUS_DEFINE_ERROR(ParseError);
VECTORPLUS_DEFINE_ERROR(UnsupportedElement);
VECTORPLUS_DEFINE_ERROR(WidthMismatch);

// data
VECTORPLUS_DEFINE_ERROR(IoError);
VECTORPLUS_DEFINE_ERROR(SchemaError);
VECTORPLUS_DEFINE_ERROR(DegenerateData);
VECTORPLUS_DEFINE_ERROR(NonPositiveValue);
VECTORPLUS_DEFINE_ERROR(UnknownLabel);
VECTORPLUS_DEFINE_ERROR(InvalidClassCount);

// encoder / decoder
VECTORPLUS_DEFINE_ERROR(DimensionMismatch);
VECTORPLUS_DEFINE_ERROR(BatchTooSmall);
VECTORPLUS_DEFINE_ERROR(NonFiniteLoss);
VECTORPLUS_DEFINE_ERROR(UnknownToken);

// latent
VECTORPLUS_DEFINE_ERROR(SingularCovariance);
VECTORPLUS_DEFINE_ERROR(EmptyComponent);
VECTORPLUS_DEFINE_ERROR(CholeskyFailure);
VECTORPLUS_DEFINE_ERROR(NonSquare);

// generate
VECTORPLUS_DEFINE_ERROR(InvalidSmiles);
VECTORPLUS_DEFINE_ERROR(InsufficientNeighbors);
VECTORPLUS_DEFINE_ERROR(ModelMismatch);

// eval
VECTORPLUS_DEFINE_ERROR(NotPD);
VECTORPLUS_DEFINE_ERROR(NonConvergence);
VECTORPLUS_DEFINE_ERROR(DegenerateClass);
VECTORPLUS_DEFINE_ERROR(InsufficientData);
VECTORPLUS_DEFINE_ERROR(LengthMismatch);

// config
VECTORPLUS_DEFINE_ERROR(ConfigError);

#undef VECTORPLUS_DEFINE_ERROR

// An error raised inside a named pipeline stage. Keeps the original kind.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& inner)
      : Error(inner.kind(), "[" + stage + "] " + strip_kind(inner)), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  static std::string strip_kind(const Error& e) {
    const std::string what = e.what();
    const std::string prefix = e.kind() + ": ";
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
  }

  std::string stage_;
};

}  // namespace vectorplus
