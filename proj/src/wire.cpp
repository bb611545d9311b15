#include "beastpipe/wire.hpp"

#include <cmath>

#include "beastpipe/byte_io.hpp"

namespace beastpipe::wire {

namespace {

using Kind = ProtocolError::Kind;

struct TruncatedError : ProtocolError {
  explicit TruncatedError(const std::string& what) : ProtocolError(Kind::kTruncated, what) {}
};

using Reader = ByteReader<TruncatedError>;

bool wire_dtype_ok(std::uint8_t code) {
  return code <= static_cast<std::uint8_t>(DType::kFloat32);
}

void put_descriptor(ByteWriter& w, DType dtype, const Shape& dims) {
  if (!wire_dtype_ok(static_cast<std::uint8_t>(dtype))) {
    throw ProtocolError(Kind::kBadValue,
                        std::string("dtype ") + dtype_name(dtype) + " cannot cross the wire");
  }
  if (dims.size() > 255) throw ProtocolError(Kind::kBadValue, "too many dims");
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dtype));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) {
    if (d < 0 || d > 0xFFFFFFFFll) throw ProtocolError(Kind::kBadValue, "extent out of u32 range");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
}

void put_array(ByteWriter& w, const NDArray& a) {
  put_descriptor(w, a.dtype(), a.dims());
  w.put_bytes(a.raw());
}

ObsSpec get_descriptor(Reader& r) {
  const auto code = r.get<std::uint8_t>();
  if (!wire_dtype_ok(code)) {
    throw ProtocolError(Kind::kBadValue, "unknown dtype code " + std::to_string(code));
  }
  const auto ndim = r.get<std::uint8_t>();
  ObsSpec spec{static_cast<DType>(code), {}};
  for (int i = 0; i < ndim; ++i) spec.dims.push_back(r.get<std::uint32_t>());
  return spec;
}

NDArray get_array(Reader& r) {
  const ObsSpec spec = get_descriptor(r);
  if (!bounded_nbytes(spec.dtype, spec.dims, r.remaining())) {
    throw TruncatedError("array data for " + shape_str(spec.dims) + " exceeds frame");
  }
  NDArray a(spec.dtype, spec.dims);
  const auto data = r.take(a.nbytes());
  std::memcpy(a.raw().data(), data.data(), data.size());
  return a;
}

}  // namespace

MsgType type_of(const Message& msg) {
  return static_cast<MsgType>(msg.index() + 1);
}

const char* type_name(MsgType type) {
  switch (type) {
    case MsgType::kHello:
      return "HELLO";
    case MsgType::kStep:
      return "STEP";
    case MsgType::kAction:
      return "ACTION";
    case MsgType::kBye:
      return "BYE";
    case MsgType::kError:
      return "ERROR";
  }
  return "UNKNOWN";
}

std::string encode_frame(const Message& msg) {
  ByteWriter w;
  w.put<std::uint32_t>(0);  // patched below
  w.put<std::uint8_t>(static_cast<std::uint8_t>(type_of(msg)));
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Hello>) {
          if (m.num_actions < 1) throw ProtocolError(Kind::kBadValue, "num_actions must be >= 1");
          w.put<std::uint32_t>(m.version);
          put_descriptor(w, m.obs.dtype, m.obs.dims);
          w.put<std::uint32_t>(m.num_actions);
        } else if constexpr (std::is_same_v<M, Step>) {
          put_array(w, m.output.observation);
          w.put<float>(m.output.reward);
          w.put<std::uint8_t>(m.output.done ? 1 : 0);
          w.put<std::int64_t>(m.output.episode_step);
          w.put<float>(m.output.episode_return);
        } else if constexpr (std::is_same_v<M, Action>) {
          put_array(w, NDArray::scalar<std::int64_t>(m.action));
        } else if constexpr (std::is_same_v<M, ErrorMsg>) {
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.code));
          w.put<std::uint32_t>(static_cast<std::uint32_t>(m.message.size()));
          w.put_bytes(m.message);
        }
      },
      msg);
  std::string& out = w.str();
  const std::size_t len = out.size() - 4;
  if (len > kMaxFrameBytes) {
    throw ProtocolError(Kind::kOversize, "frame of " + std::to_string(len) + " bytes exceeds limit");
  }
  const auto len32 = static_cast<std::uint32_t>(len);
  std::memcpy(out.data(), &len32, 4);
  return std::move(out);
}

Message decode_body(std::string_view body, const ObsSpec* expected_obs) {
  if (body.size() > kMaxFrameBytes) {
    throw ProtocolError(Kind::kOversize, "frame of " + std::to_string(body.size()) + " bytes exceeds limit");
  }
  Reader r(body);
  const auto code = r.get<std::uint8_t>();
  Message msg;
  switch (static_cast<MsgType>(code)) {
    case MsgType::kHello: {
      Hello h;
      h.version = r.get<std::uint32_t>();
      h.obs = get_descriptor(r);
      h.num_actions = r.get<std::uint32_t>();
      if (h.num_actions < 1) throw ProtocolError(Kind::kBadValue, "HELLO with num_actions 0");
      msg = std::move(h);
      break;
    }
    case MsgType::kStep: {
      Step s;
      s.output.observation = get_array(r);
      s.output.reward = r.get<float>();
      const auto done = r.get<std::uint8_t>();
      if (done > 1) throw ProtocolError(Kind::kBadValue, "done byte " + std::to_string(done));
      s.output.done = done == 1;
      s.output.episode_step = r.get<std::int64_t>();
      s.output.episode_return = r.get<float>();
      if (!std::isfinite(s.output.reward)) throw ProtocolError(Kind::kBadValue, "non-finite reward");
      if (expected_obs && (s.output.observation.dtype() != expected_obs->dtype ||
                           s.output.observation.dims() != expected_obs->dims)) {
        throw ProtocolError(Kind::kSpecMismatch,
                            std::string("STEP observation ") +
                                dtype_name(s.output.observation.dtype()) +
                                shape_str(s.output.observation.dims()) + " does not match HELLO " +
                                dtype_name(expected_obs->dtype) + shape_str(expected_obs->dims));
      }
      msg = std::move(s);
      break;
    }
    case MsgType::kAction: {
      const NDArray a = get_array(r);
      if (a.dtype() != DType::kInt64 || a.size() != 1) {
        throw ProtocolError(Kind::kBadValue, "ACTION must carry one int64");
      }
      msg = Action{a.values<std::int64_t>()[0]};
      break;
    }
    case MsgType::kBye:
      msg = Bye{};
      break;
    case MsgType::kError: {
      ErrorMsg e;
      e.code = static_cast<ErrorCode>(r.get<std::uint32_t>());
      const auto n = r.get<std::uint32_t>();
      e.message = std::string(r.take(n));
      msg = std::move(e);
      break;
    }
    default:
      throw ProtocolError(Kind::kUnknownType, "unknown msg_type 0x" + [&] {
        static const char* hex = "0123456789ABCDEF";
        return std::string{hex[code >> 4], hex[code & 15]};
      }());
  }
  if (r.remaining() != 0) {
    throw ProtocolError(Kind::kTrailingBytes,
                        std::to_string(r.remaining()) + " trailing byte(s) in " +
                            type_name(static_cast<MsgType>(code)) + " frame");
  }
  return msg;
}

Message decode_frame(std::string_view frame, const ObsSpec* expected_obs) {
  if (frame.size() < 4) throw ProtocolError(Kind::kTruncated, "frame shorter than its length prefix");
  std::uint32_t len;
  std::memcpy(&len, frame.data(), 4);
  if (len > kMaxFrameBytes) {
    throw ProtocolError(Kind::kOversize, "declared frame length " + std::to_string(len) + " exceeds limit");
  }
  if (len == 0) throw ProtocolError(Kind::kTruncated, "frame without msg_type");
  const auto available = frame.size() - 4;
  if (available < len) {
    throw ProtocolError(Kind::kTruncated, "frame declares " + std::to_string(len) +
                                              " bytes but carries " + std::to_string(available));
  }
  if (available > len) {
    throw ProtocolError(Kind::kTrailingBytes,
                        std::to_string(available - len) + " byte(s) after frame end");
  }
  return decode_body(frame.substr(4), expected_obs);
}

}  // namespace beastpipe::wire
