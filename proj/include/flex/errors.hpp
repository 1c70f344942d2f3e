#pragma once
// Error codes and the exception type shared by all flex modules.

#include <stdexcept>
#include <string>

namespace flex {

enum class Errc {
  NormalizesToEmpty,
  DuplicateContent,
  UnknownId,
  SelfMerge,
  BackendUnavailable,
  MalformedResponse,
  NoScenarioRule,
  UnknownBackend,
  LengthMismatch,
  TooFewPoints,
  ZeroVariance,
  UnsupportedVersion,
  CorruptRecord,
  DuplicateHash,
  MalformedToolArguments,
  StorageError,
  ConfigError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::NormalizesToEmpty: return "NormalizesToEmpty";
    case Errc::DuplicateContent: return "DuplicateContent";
    case Errc::UnknownId: return "UnknownId";
    case Errc::SelfMerge: return "SelfMerge";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::NoScenarioRule: return "NoScenarioRule";
    case Errc::UnknownBackend: return "UnknownBackend";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::CorruptRecord: return "CorruptRecord";
    case Errc::DuplicateHash: return "DuplicateHash";
    case Errc::MalformedToolArguments: return "MalformedToolArguments";
    case Errc::StorageError: return "StorageError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

  // Line number for file-format errors, 0 when not applicable.
  Error& at_line(int line) {
    line_ = line;
    return *this;
  }
  int line() const { return line_; }

 private:
  Errc code_;
  int line_ = 0;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg, int line = 0) {
  Error e(code, msg);
  if (line > 0) e.at_line(line);
  throw e;
}

}  // namespace flex
