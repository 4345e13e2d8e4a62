#pragma once

#include <stdexcept>
#include <string>

namespace gloc {

// Base class for all recoverable toolkit errors. The CLI maps these to a
// single machine-readable "error: <Name>: <message>" line and a nonzero exit.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& message)
      : std::runtime_error(name + ": " + message), name_(std::move(name)) {}

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

#define GLOC_DEFINE_ERROR(Name)                          \
  class Name : public Error {                            \
   public:                                               \
    explicit Name(const std::string& message)            \
        : Error(#Name, message) {}                       \
  }

GLOC_DEFINE_ERROR(InvalidConfig);
GLOC_DEFINE_ERROR(InvalidParams);
GLOC_DEFINE_ERROR(NonPositiveDepth);
GLOC_DEFINE_ERROR(DegenerateDirection);
GLOC_DEFINE_ERROR(DegenerateWeights);
GLOC_DEFINE_ERROR(ZeroVector);
GLOC_DEFINE_ERROR(AmbiguousNormal);
GLOC_DEFINE_ERROR(NoVisibleViews);
GLOC_DEFINE_ERROR(LengthMismatch);
GLOC_DEFINE_ERROR(DimensionMismatch);
GLOC_DEFINE_ERROR(TooFewMatches);
GLOC_DEFINE_ERROR(EmptyWindow);
GLOC_DEFINE_ERROR(DegenerateConfiguration);
GLOC_DEFINE_ERROR(NoConsensus);
GLOC_DEFINE_ERROR(IoError);
GLOC_DEFINE_ERROR(ParseError);
GLOC_DEFINE_ERROR(SceneHashMismatch);

#undef GLOC_DEFINE_ERROR

}  // namespace gloc
