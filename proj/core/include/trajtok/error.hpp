#pragma once

#include <stdexcept>
#include <string>

namespace trajtok {

enum class ErrorCode {
  InvalidShape,
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  IoError,
  ParseError,
  SplitOverlap,
  MissingAsset,
  SceneError,
  InvalidClusterCount,
  ShapeError,
  QuotaError,
  InvalidGrid,
  NoTracksError,
  ConfigError,
  NonFinite,
  StaleTrace,
  InsufficientData,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace trajtok
