#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zigan {

enum class ErrorCode {
  MissingGlyph,
  BadFontFile,
  BadRange,
  InsufficientCorpus,
  BadResolution,
  ShapeMismatch,
  DimensionMismatch,
  EmptySet,
  EmptyBatch,
  EmptyPool,
  EmptyClass,
  NonFiniteLoss,
  NonPSD,
  CorruptCheckpoint,
  Config,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (tests, CLI exit codes, Python bindings) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Process exit status used by the command-line tool:
/// 2 config, 3 data, 4 numeric, 5 I/O.
int exit_code_for(ErrorCode code);

}  // namespace zigan
