#pragma once

#include <stdexcept>
#include <string>

namespace hyperweak {

enum class ErrorCode {
  InvalidInput,
  InvalidParams,
  DegenerateDomain,
  OutOfDomain,
  InvalidKernel,
  InvalidAperture,
  UnsupportedModel,
  DivergentInput,
  ConstructionFailure,
  DecompositionQuality,
  Config,
  Io,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::InvalidParams: return "invalid-params";
    case ErrorCode::DegenerateDomain: return "degenerate-domain";
    case ErrorCode::OutOfDomain: return "out-of-domain";
    case ErrorCode::InvalidKernel: return "invalid-kernel";
    case ErrorCode::InvalidAperture: return "invalid-aperture";
    case ErrorCode::UnsupportedModel: return "unsupported-model";
    case ErrorCode::DivergentInput: return "divergent-input";
    case ErrorCode::ConstructionFailure: return "construction-failure";
    case ErrorCode::DecompositionQuality: return "decomposition-quality";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace hyperweak
