#ifndef BEASTPIPE_WIRE_HPP_
#define BEASTPIPE_WIRE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "beastpipe/errors.hpp"
#include "beastpipe/ndarray.hpp"
#include "beastpipe/rollout.hpp"

// Framed binary protocol between environment servers and actors.
//
// frame   := u32 length | u8 msg_type | payload      (length counts type+payload)
// array   := u8 dtype | u8 ndim | u32 dims[ndim] | raw row-major data
// HELLO   := u32 version | u8 dtype | u8 ndim | u32 dims[ndim] | u32 num_actions
// STEP    := array observation | f32 reward | u8 done | i64 episode_step | f32 episode_return
// ACTION  := array (int64, one element)
// BYE     := (empty)
// ERROR   := u32 code | u32 message_len | message bytes
//
// All integers and floats are little-endian. The server speaks first
// (HELLO, then a STEP with done=1) and afterwards answers every ACTION with
// exactly one STEP.
namespace beastpipe::wire {

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 64u << 20;

enum class MsgType : std::uint8_t {
  kHello = 0x01,
  kStep = 0x02,
  kAction = 0x03,
  kBye = 0x04,
  kError = 0x05,
};

enum class ErrorCode : std::uint32_t {
  kInvalidAction = 1,
  kProtocol = 2,
  kServerFull = 3,
  kInternal = 4,
};

struct Hello {
  std::uint32_t version = kProtocolVersion;
  ObsSpec obs;
  std::uint32_t num_actions = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct Step {
  EnvOutput output;
  friend bool operator==(const Step& a, const Step& b) {
    return a.output.observation == b.output.observation && a.output.reward == b.output.reward &&
           a.output.done == b.output.done && a.output.episode_step == b.output.episode_step &&
           a.output.episode_return == b.output.episode_return;
  }
};

struct Action {
  std::int64_t action = 0;
  friend bool operator==(const Action&, const Action&) = default;
};

struct Bye {
  friend bool operator==(const Bye&, const Bye&) = default;
};

struct ErrorMsg {
  ErrorCode code = ErrorCode::kProtocol;
  std::string message;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using Message = std::variant<Hello, Step, Action, Bye, ErrorMsg>;

MsgType type_of(const Message& msg);
const char* type_name(MsgType type);

class ProtocolError : public Error {
 public:
  enum class Kind {
    kTruncated,
    kUnknownType,
    kTrailingBytes,
    kOversize,
    kBadValue,
    kSpecMismatch,
    kUnexpected,
  };
  ProtocolError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Throws ProtocolError(kOversize) above kMaxFrameBytes.
std::string encode_frame(const Message& msg);

// Decodes exactly one complete frame; any byte beyond it is an error. With
// `expected_obs`, a STEP observation must match that dtype and shape.
Message decode_frame(std::string_view frame, const ObsSpec* expected_obs = nullptr);

// Decodes `body` = msg_type byte + payload (the frame minus its length
// prefix).
Message decode_body(std::string_view body, const ObsSpec* expected_obs = nullptr);

}  // namespace beastpipe::wire

#endif  // BEASTPIPE_WIRE_HPP_
