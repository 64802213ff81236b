#include "exprtree/errors.hpp"

namespace exprtree {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnbalancedParens: return "UnbalancedParens";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::UnresolvedOperand: return "UnresolvedOperand";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NaNInput: return "NaNInput";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteCost: return "NonFiniteCost";
    case ErrorCode::OperandNotInVocab: return "OperandNotInVocab";
    case ErrorCode::KMismatch: return "KMismatch";
    case ErrorCode::LayerLimitExceeded: return "LayerLimitExceeded";
    case ErrorCode::NoExpressionProduced: return "NoExpressionProduced";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::AnswerMismatch: return "AnswerMismatch";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::LabelCompileError: return "LabelCompileError";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace exprtree
