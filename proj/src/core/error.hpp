#pragma once

#include <stdexcept>
#include <string>

namespace medeval {

enum class ErrorCode {
  invalid_argument,
  io_error,
  malformed_record,
  duplicate_id,
  unknown_gold_letter,
  k_too_large,
  inconsistent_config,
  empty_corpus,
  unknown_pid,
  zero_vector,
  dimension_mismatch,
  no_answer_found,
  letter_out_of_range,
  backend_unreachable,
  protocol_violation,
  proposal_stagnant,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::malformed_record: return "malformed_record";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::unknown_gold_letter: return "unknown_gold_letter";
    case ErrorCode::k_too_large: return "k_too_large";
    case ErrorCode::inconsistent_config: return "inconsistent_config";
    case ErrorCode::empty_corpus: return "empty_corpus";
    case ErrorCode::unknown_pid: return "unknown_pid";
    case ErrorCode::zero_vector: return "zero_vector";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::no_answer_found: return "no_answer_found";
    case ErrorCode::letter_out_of_range: return "letter_out_of_range";
    case ErrorCode::backend_unreachable: return "backend_unreachable";
    case ErrorCode::protocol_violation: return "protocol_violation";
    case ErrorCode::proposal_stagnant: return "proposal_stagnant";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace medeval
