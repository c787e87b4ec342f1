#include "m2v/error.hpp"

namespace m2v {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::NoActionsFound: return "NoActionsFound";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::NoMatch: return "NoMatch";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::UnmappableKeyword: return "UnmappableKeyword";
    case ErrorCode::UnresolvedParameter: return "UnresolvedParameter";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::TemplateTooLarge: return "TemplateTooLarge";
    case ErrorCode::AlreadyRecording: return "AlreadyRecording";
    case ErrorCode::NotRecording: return "NotRecording";
    case ErrorCode::NonMonotonicTick: return "NonMonotonicTick";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace m2v
