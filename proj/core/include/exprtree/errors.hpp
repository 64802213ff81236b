#pragma once

#include <stdexcept>
#include <string>

namespace exprtree {

enum class ErrorCode {
  // equation parsing / evaluation
  UnbalancedParens,
  UnknownToken,
  IndexOutOfRange,
  EmptyInput,
  DivisionByZero,
  UnresolvedOperand,
  Overflow,
  // numeric kernels
  ShapeMismatch,
  NaNInput,
  NonFiniteLoss,
  // matching / loss
  NonFiniteCost,
  OperandNotInVocab,
  KMismatch,
  // model
  LayerLimitExceeded,
  NoExpressionProduced,
  EmptyText,
  // data
  MalformedRecord,
  AnswerMismatch,
  // training
  DivergedLoss,
  LabelCompileError,
  // cli
  UsageError,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace exprtree
