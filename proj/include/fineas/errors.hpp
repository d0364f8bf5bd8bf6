#pragma once

#include <stdexcept>
#include <string>

namespace fineas {

enum class Errc {
  // record validation
  MissingField,
  ScoreOutOfRange,
  EmptyHeadline,
  BadTimestamp,
  // ingest
  FileNotFound,
  ParseError,
  DegenerateSplit,
  // tokenize
  CorpusEmpty,
  // numeric
  ShapeMismatch,
  NonFiniteValue,
  NotScalarLoss,
  MissingGrad,
  // models
  IdOutOfRange,
  AllPadRow,
  // train-eval
  LengthMismatch,
  EmptyBatch,
  EmptySplit,
  NonFiniteLoss,
  // cli / config
  ConfigHashMismatch,
  ConfigError,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MissingField: return "MissingField";
    case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
    case Errc::EmptyHeadline: return "EmptyHeadline";
    case Errc::BadTimestamp: return "BadTimestamp";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::ParseError: return "ParseError";
    case Errc::DegenerateSplit: return "DegenerateSplit";
    case Errc::CorpusEmpty: return "CorpusEmpty";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::NotScalarLoss: return "NotScalarLoss";
    case Errc::MissingGrad: return "MissingGrad";
    case Errc::IdOutOfRange: return "IdOutOfRange";
    case Errc::AllPadRow: return "AllPadRow";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::ConfigHashMismatch: return "ConfigHashMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace fineas
