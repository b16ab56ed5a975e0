#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedhorizon/error.hpp"
#include "fedhorizon/model.hpp"

namespace fedhorizon {

// Wire format, version 1.
//
// Frame:    u32 length (big-endian), then exactly `length` payload bytes.
// Payload:  u8 version | u8 kind | u32 round_index | u16 id_length | id bytes | body
//
// Integers are big-endian. Reals are IEEE-754 binary64, little-endian.
// A parameter array is u32 count followed by count reals.
//
// Bodies by kind:
//   1 JOIN          u64 num_samples | u32 feature_dim
//   2 GLOBAL_MODEL  u32 input_dim | u32 hidden_dim | u32 num_classes | f64 dropout_rate
//                   | f64 learning_rate | u32 local_epochs | u32 batch_size | u64 seed
//                   | f64 reg_weight | parameter array
//   3 LOCAL_UPDATE  u64 num_samples (>= 1) | parameter array
//   4 ROUND_RESULT  u64 global_digest | u32 updates_aggregated
//   5 SHUTDOWN      (empty)
//   6 ERROR         u16 code | u16 text_length | UTF-8 text

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kDefaultMaxFrameBytes = 64u << 20;
inline constexpr std::size_t kFrameHeaderBytes = 4;

enum class MessageKind : std::uint8_t {
  join = 1,
  global_model = 2,
  local_update = 3,
  round_result = 4,
  shutdown = 5,
  error = 6,
};

struct JoinBody {
  std::uint64_t num_samples = 0;
  std::uint32_t feature_dim = 0;
  friend bool operator==(const JoinBody&, const JoinBody&) = default;
};

/// Everything a node needs to run one round of local training.
struct TrainingDirective {
  ModelSpec model;
  Hyperparameters hyper;  // reg_weight and seed already specialised for the node
  friend bool operator==(const TrainingDirective& a, const TrainingDirective& b) {
    return a.model == b.model && a.hyper.learning_rate == b.hyper.learning_rate &&
           a.hyper.local_epochs == b.hyper.local_epochs &&
           a.hyper.batch_size == b.hyper.batch_size && a.hyper.seed == b.hyper.seed &&
           a.hyper.reg_weight == b.hyper.reg_weight;
  }
};

struct GlobalModelBody {
  TrainingDirective directive;
  ParameterVector params;
  friend bool operator==(const GlobalModelBody&, const GlobalModelBody&) = default;
};

struct LocalUpdateBody {
  std::uint64_t num_samples = 0;
  ParameterVector params;
  friend bool operator==(const LocalUpdateBody&, const LocalUpdateBody&) = default;
};

struct RoundResultBody {
  std::uint64_t global_digest = 0;
  std::uint32_t updates_aggregated = 0;
  friend bool operator==(const RoundResultBody&, const RoundResultBody&) = default;
};

struct ShutdownBody {
  friend bool operator==(const ShutdownBody&, const ShutdownBody&) = default;
};

enum class RemoteErrorCode : std::uint16_t {
  generic = 1,
  protocol = 2,
  timeout = 3,
  duplicate_node = 4,
  training_failed = 5,
  version_mismatch = 6,
};

struct ErrorBody {
  std::uint16_t code = 0;
  std::string text;
  friend bool operator==(const ErrorBody&, const ErrorBody&) = default;
};

/// Alternatives appear in kind order: index + 1 == kind.
using MessageBody =
    std::variant<JoinBody, GlobalModelBody, LocalUpdateBody, RoundResultBody, ShutdownBody, ErrorBody>;

struct Message {
  std::uint8_t version = kProtocolVersion;
  std::uint32_t round_index = 0;
  std::string node_id;
  MessageBody body = ShutdownBody{};

  MessageKind kind() const noexcept { return static_cast<MessageKind>(body.index() + 1); }
  friend bool operator==(const Message&, const Message&) = default;
};

enum class DecodeErrorCode {
  incomplete_frame,
  frame_too_large,
  version_mismatch,
  unknown_kind,
  count_mismatch,
  malformed_body,
};

std::string_view to_string(DecodeErrorCode code);

class ProtocolError : public Error {
 public:
  ProtocolError(DecodeErrorCode code, const std::string& what)
      : Error(ErrorCategory::protocol, std::string(to_string(code)) + ": " + what), code_(code) {}
  DecodeErrorCode code() const noexcept { return code_; }

 private:
  DecodeErrorCode code_;
};

using Bytes = std::vector<std::uint8_t>;

/// Full frame, length prefix included. Throws ConfigError for a node id
/// longer than 65535 bytes, a version other than 1, or a frame above max_frame_bytes.
Bytes encode_message(const Message& msg, std::size_t max_frame_bytes = kDefaultMaxFrameBytes);

/// Inverse of encode_message on one complete frame. Throws ProtocolError.
Message decode_message(std::span<const std::uint8_t> frame,
                       std::size_t max_frame_bytes = kDefaultMaxFrameBytes);

/// Payload length announced by a frame header; throws on a short or oversize header.
std::size_t frame_payload_length(std::span<const std::uint8_t> header,
                                 std::size_t max_frame_bytes = kDefaultMaxFrameBytes);

}  // namespace fedhorizon
