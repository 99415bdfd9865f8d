#pragma once

#include <stdexcept>
#include <string>

namespace mole {

enum class Errc {
  DimensionMismatch,
  SingularMatrix,
  RetryExhausted,
  ZeroNorm,
  NonDivisible,
  DomainError,
  RankDeficient,
  InsufficientPairs,
  GeometryMismatch,
  InvalidGeometry,
  Format,
  Io,
};

inline const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::RetryExhausted: return "RetryExhausted";
    case Errc::ZeroNorm: return "ZeroNorm";
    case Errc::NonDivisible: return "NonDivisible";
    case Errc::DomainError: return "DomainError";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::InsufficientPairs: return "InsufficientPairs";
    case Errc::GeometryMismatch: return "GeometryMismatch";
    case Errc::InvalidGeometry: return "InvalidGeometry";
    case Errc::Format: return "Format";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Library-wide exception. The code distinguishes caller mistakes
/// (validation) from numeric or IO failures.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

  bool is_validation() const noexcept {
    switch (code_) {
      case Errc::NonDivisible:
      case Errc::DomainError:
      case Errc::InsufficientPairs:
      case Errc::GeometryMismatch:
      case Errc::InvalidGeometry:
      case Errc::DimensionMismatch:
        return true;
      default:
        return false;
    }
  }

 private:
  Errc code_;
};

}  // namespace mole
