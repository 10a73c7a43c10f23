#include "zigan/errors.hpp"

namespace zigan {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingGlyph: return "MissingGlyph";
    case ErrorCode::BadFontFile: return "BadFontFile";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::InsufficientCorpus: return "InsufficientCorpus";
    case ErrorCode::BadResolution: return "BadResolution";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonPSD: return "NonPSD";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
      return 2;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonPSD:
      return 4;
    case ErrorCode::Io:
    case ErrorCode::CorruptCheckpoint:
      return 5;
    default:
      return 3;
  }
}

}  // namespace zigan
