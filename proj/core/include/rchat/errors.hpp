#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rchat {

enum class ErrorCode {
  invalid_argument,
  missing_root,
  unreadable_file,
  empty_corpus,
  invalid_chunk_params,
  timeout,
  provider_error,
  exhausted_retries,
  dimension_mismatch,
  zero_vector,
  empty_index,
  io_error,
  malformed_row,
  inconsistent_dimension,
  invalid_partition,
  empty_graph,
  schema_error,
  duplicate_qid,
  mismatched_question_sets,
  length_mismatch,
  config_error,
  not_built,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so
// callers (CLI exit codes, HTTP status mapping) never have to parse messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the CSV loader; line is the 1-based physical line where the
// offending record starts.
class RowError : public Error {
 public:
  RowError(ErrorCode code, std::size_t line, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ProviderFailure : public Error {
 public:
  ProviderFailure(ErrorCode code, int status, std::string body, int attempts)
      : Error(code, "status=" + std::to_string(status) + " attempts=" + std::to_string(attempts) +
                        (body.empty() ? std::string{} : " body=" + body.substr(0, 512))),
        status_(status),
        body_(std::move(body)),
        attempts_(attempts) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int status_;
  std::string body_;
  int attempts_;
};

inline bool is_provider_error(ErrorCode c) {
  return c == ErrorCode::timeout || c == ErrorCode::provider_error ||
         c == ErrorCode::exhausted_retries;
}

}  // namespace rchat
