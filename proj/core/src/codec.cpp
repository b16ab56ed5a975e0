#include "fedhorizon/codec.hpp"

#include <bit>
#include <limits>

namespace fedhorizon {

std::string_view to_string(DecodeErrorCode code) {
  switch (code) {
    case DecodeErrorCode::incomplete_frame: return "incomplete frame";
    case DecodeErrorCode::frame_too_large: return "frame too large";
    case DecodeErrorCode::version_mismatch: return "version mismatch";
    case DecodeErrorCode::unknown_kind: return "unknown kind";
    case DecodeErrorCode::count_mismatch: return "count mismatch";
    case DecodeErrorCode::malformed_body: return "malformed body";
  }
  return "protocol error";
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { be(v, 2); }
  void u32(std::uint32_t v) { be(v, 4); }
  void u64(std::uint64_t v) { be(v, 8); }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void text16(const std::string& s, const char* what) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ConfigError(std::string(what) + " exceeds 65535 bytes");
    }
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void params(const ParameterVector& p) {
    if (p.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw ConfigError("parameter array too long for the wire format");
    }
    u32(static_cast<std::uint32_t>(p.size()));
    const std::size_t at = out_.size();
    out_.resize(at + 8 * p.size());
    std::uint8_t* dst = out_.data() + at;
    for (const double v : p.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) *dst++ = static_cast<std::uint8_t>(bits >> (8 * i));
    }
  }
  Bytes& bytes() { return out_; }

 private:
  void be(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(be(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
  std::uint64_t u64() { return be(8); }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string text16() {
    const std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  ParameterVector params() {
    const std::uint64_t count = u32();
    if (count * 8 != remaining()) {
      throw ProtocolError(DecodeErrorCode::count_mismatch,
                          "parameter array declares " + std::to_string(count) + " values but " +
                              std::to_string(remaining()) + " bytes follow");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = f64();
    return ParameterVector(std::move(values));
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw ProtocolError(DecodeErrorCode::malformed_body, "message body ends early");
    }
  }
  std::uint64_t be(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | in_[pos_ + static_cast<std::size_t>(i)];
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

void write_body(Writer& w, const MessageBody& body) {
  std::visit(
      [&w](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, JoinBody>) {
          w.u64(b.num_samples);
          w.u32(b.feature_dim);
        } else if constexpr (std::is_same_v<T, GlobalModelBody>) {
          const auto& m = b.directive.model;
          const auto& h = b.directive.hyper;
          w.u32(narrow32(m.input_dim, "input_dim"));
          w.u32(narrow32(m.hidden_dim, "hidden_dim"));
          w.u32(narrow32(m.num_classes, "num_classes"));
          w.f64(m.dropout_rate);
          w.f64(h.learning_rate);
          w.u32(narrow32(h.local_epochs, "local_epochs"));
          w.u32(narrow32(h.batch_size, "batch_size"));
          w.u64(h.seed);
          w.f64(h.reg_weight);
          w.params(b.params);
        } else if constexpr (std::is_same_v<T, LocalUpdateBody>) {
          w.u64(b.num_samples);
          w.params(b.params);
        } else if constexpr (std::is_same_v<T, RoundResultBody>) {
          w.u64(b.global_digest);
          w.u32(b.updates_aggregated);
        } else if constexpr (std::is_same_v<T, ErrorBody>) {
          w.u16(b.code);
          w.text16(b.text, "error text");
        }
      },
      body);
}

MessageBody read_body(Reader& r, MessageKind kind) {
  switch (kind) {
    case MessageKind::join: {
      JoinBody b;
      b.num_samples = r.u64();
      b.feature_dim = r.u32();
      return b;
    }
    case MessageKind::global_model: {
      GlobalModelBody b;
      auto& m = b.directive.model;
      auto& h = b.directive.hyper;
      m.input_dim = r.u32();
      m.hidden_dim = r.u32();
      m.num_classes = r.u32();
      m.dropout_rate = r.f64();
      h.learning_rate = r.f64();
      h.local_epochs = r.u32();
      h.batch_size = r.u32();
      h.seed = r.u64();
      h.reg_weight = r.f64();
      b.params = r.params();
      return b;
    }
    case MessageKind::local_update: {
      LocalUpdateBody b;
      b.num_samples = r.u64();
      if (b.num_samples == 0) {
        throw ProtocolError(DecodeErrorCode::malformed_body, "LOCAL_UPDATE carries zero samples");
      }
      b.params = r.params();
      return b;
    }
    case MessageKind::round_result: {
      RoundResultBody b;
      b.global_digest = r.u64();
      b.updates_aggregated = r.u32();
      return b;
    }
    case MessageKind::shutdown:
      return ShutdownBody{};
    case MessageKind::error: {
      ErrorBody b;
      b.code = r.u16();
      b.text = r.text16();
      return b;
    }
  }
  throw ProtocolError(DecodeErrorCode::unknown_kind, "unreachable kind");
}

}  // namespace

Bytes encode_message(const Message& msg, std::size_t max_frame_bytes) {
  if (msg.version != kProtocolVersion) {
    throw ConfigError("cannot encode protocol version " + std::to_string(msg.version));
  }
  Writer w;
  w.u32(0);  // length placeholder
  w.u8(msg.version);
  w.u8(static_cast<std::uint8_t>(msg.kind()));
  w.u32(msg.round_index);
  w.text16(msg.node_id, "node_id");
  write_body(w, msg.body);

  Bytes& out = w.bytes();
  const std::size_t payload = out.size() - kFrameHeaderBytes;
  if (payload > max_frame_bytes) {
    throw ConfigError("message of " + std::to_string(payload) + " bytes exceeds the frame cap of " +
                      std::to_string(max_frame_bytes));
  }
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(payload >> (8 * (3 - i)));
  return std::move(out);
}

std::size_t frame_payload_length(std::span<const std::uint8_t> header, std::size_t max_frame_bytes) {
  if (header.size() < kFrameHeaderBytes) {
    throw ProtocolError(DecodeErrorCode::incomplete_frame,
                        "frame header needs 4 bytes, have " + std::to_string(header.size()));
  }
  const std::size_t length = (std::size_t{header[0]} << 24) | (std::size_t{header[1]} << 16) |
                             (std::size_t{header[2]} << 8) | std::size_t{header[3]};
  if (length > max_frame_bytes) {
    throw ProtocolError(DecodeErrorCode::frame_too_large,
                        "frame announces " + std::to_string(length) + " bytes, cap is " +
                            std::to_string(max_frame_bytes));
  }
  return length;
}

Message decode_message(std::span<const std::uint8_t> frame, std::size_t max_frame_bytes) {
  const std::size_t length = frame_payload_length(frame, max_frame_bytes);
  if (frame.size() < kFrameHeaderBytes + length) {
    throw ProtocolError(DecodeErrorCode::incomplete_frame,
                        "frame announces " + std::to_string(length) + " payload bytes, have " +
                            std::to_string(frame.size() - kFrameHeaderBytes));
  }
  if (frame.size() > kFrameHeaderBytes + length) {
    throw ProtocolError(DecodeErrorCode::malformed_body, "trailing bytes after frame");
  }
  const auto payload = frame.subspan(kFrameHeaderBytes, length);
  if (payload.size() < 8) {
    throw ProtocolError(DecodeErrorCode::incomplete_frame, "payload shorter than the fixed header");
  }

  Message msg;
  Reader r(payload);
  msg.version = r.u8();
  if (msg.version != kProtocolVersion) {
    throw ProtocolError(DecodeErrorCode::version_mismatch,
                        "peer speaks version " + std::to_string(msg.version));
  }
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 6) {
    throw ProtocolError(DecodeErrorCode::unknown_kind, "kind " + std::to_string(kind));
  }
  msg.round_index = r.u32();
  msg.node_id = r.text16();
  msg.body = read_body(r, static_cast<MessageKind>(kind));
  if (r.remaining() != 0) {
    throw ProtocolError(DecodeErrorCode::malformed_body,
                        std::to_string(r.remaining()) + " unread bytes after body");
  }
  return msg;
}

}  // namespace fedhorizon
