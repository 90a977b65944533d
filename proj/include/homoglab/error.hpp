#pragma once

#include <stdexcept>
#include <string>

namespace homoglab {

enum class Errc {
  InvalidArgument,
  BadLevel,
  BadPeriod,
  MaskEmpty,
  NoConvergence,
  NegativeSpectrum,
  DegenerateFit,
  Validation,
  Io,
};

const char* to_string(Errc code) noexcept;

/// Library-wide exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace homoglab
