#include "trajtok/error.hpp"

namespace trajtok {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SplitOverlap: return "SplitOverlap";
    case ErrorCode::MissingAsset: return "MissingAsset";
    case ErrorCode::SceneError: return "SceneError";
    case ErrorCode::InvalidClusterCount: return "InvalidClusterCount";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::QuotaError: return "QuotaError";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::NoTracksError: return "NoTracksError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::StaleTrace: return "StaleTrace";
    case ErrorCode::InsufficientData: return "InsufficientData";
  }
  return "UnknownError";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void raise(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace trajtok
