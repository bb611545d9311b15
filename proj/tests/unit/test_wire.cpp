#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "beastpipe/net.hpp"
#include "beastpipe/wire.hpp"
#include "oracles.hpp"
#include "protocol_checks.hpp"
#include "test_util.hpp"

using namespace beastpipe;
using namespace beastpipe::wire;
using protocheck::to_hex;

namespace {

ProtocolError::Kind decode_kind(const std::string& bytes, const ObsSpec* spec = nullptr) {
  try {
    decode_frame(bytes, spec);
  } catch (const ProtocolError& e) {
    return e.kind();
  }
  FAIL("decoded without error: " << to_hex(bytes));
  return ProtocolError::Kind::kUnexpected;
}

std::string unhex(const std::string& hex) {
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) out += static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16));
  return out;
}

Step sample_step() {
  Step s;
  s.output.observation = NDArray::from<float>({2, 2}, {0.0f, 1.0f, -2.5f, 3.0f});
  s.output.reward = -0.75f;
  s.output.done = true;
  s.output.episode_step = 12;
  s.output.episode_return = 4.5f;
  return s;
}

}  // namespace

TEST_CASE("ACTION 3 encodes to the hand-derived bytes") {
  CHECK(to_hex(encode_frame(Action{3})) == "0b000000030100" "0300000000000000");
}

TEST_CASE("BYE encodes to a bare type byte") { CHECK(to_hex(encode_frame(Bye{})) == "0100000004"); }

TEST_CASE("the ACTION bytes decode back to ACTION 3") {
  const Message m = decode_frame(unhex("0b0000000301000300000000000000"));
  REQUIRE(std::holds_alternative<Action>(m));
  CHECK(std::get<Action>(m).action == 3);
  CHECK(type_of(m) == MsgType::kAction);
}

TEST_CASE("bandit fixture frames decode to their meaning") {
  const auto frames = oracle::read_hex_frames(testutil::fixture("bandit_script_1.server.hex"));
  REQUIRE(frames.size() == 3);
  const Message hello = decode_frame(frames[0]);
  REQUIRE(std::holds_alternative<Hello>(hello));
  CHECK(std::get<Hello>(hello).version == 1);
  CHECK(std::get<Hello>(hello).obs == ObsSpec{DType::kFloat32, {1}});
  CHECK(std::get<Hello>(hello).num_actions == 2);
  const Message first = decode_frame(frames[1]);
  REQUIRE(std::holds_alternative<Step>(first));
  CHECK(std::get<Step>(first).output.done);
  CHECK(std::get<Step>(first).output.reward == 0.0f);
  const Message second = decode_frame(frames[2]);
  CHECK(std::get<Step>(second).output.reward == 1.0f);
  CHECK(std::get<Step>(second).output.episode_step == 1);
}

TEST_CASE("every message type round trips") {
  Hello h;
  h.obs = ObsSpec{DType::kUInt8, {3, 4, 5}};
  h.num_actions = 6;
  const std::vector<Message> msgs = {h,       sample_step(), Action{-9}, Action{1LL << 40}, Bye{},
                                     ErrorMsg{ErrorCode::kInvalidAction, "action 7 out of range"}};
  for (const auto& m : msgs) {
    const std::string bytes = encode_frame(m);
    CHECK(decode_frame(bytes) == m);
  }
  Step ints;
  ints.output.observation = NDArray::from<std::int64_t>({}, {42});
  CHECK(decode_frame(encode_frame(ints)) == Message(ints));
}

TEST_CASE("random steps round trip") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    Step s;
    const DType dt = std::array{DType::kUInt8, DType::kInt64, DType::kFloat32}[rng() % 3];
    Shape dims;
    for (std::size_t k = 0; k < rng() % 4; ++k) dims.push_back(static_cast<std::int64_t>(rng() % 4));
    s.output.observation = testutil::random_array(dt, dims, rng, 0.0, 200.0);
    s.output.reward = static_cast<float>(static_cast<std::int64_t>(rng() % 2001) - 1000) / 8.0f;
    s.output.done = rng() & 1;
    s.output.episode_step = static_cast<std::int64_t>(rng() % 100000);
    s.output.episode_return = static_cast<float>(rng() % 100);
    const Message back = decode_frame(encode_frame(s));
    CHECK(back == Message(s));
  }
}

TEST_CASE("a truncated payload is rejected") {
  const std::string good = encode_frame(sample_step());
  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    std::string part = good.substr(0, cut);
    CHECK_THROWS_AS(decode_frame(part), ProtocolError);
  }
  // Consistent length prefix but a payload that ends early.
  std::string body = good.substr(4, good.size() - 4 - 3);
  std::string shortened = encode_frame(Bye{}).substr(0, 0);
  const auto len = static_cast<std::uint32_t>(body.size());
  for (int i = 0; i < 4; ++i) shortened += static_cast<char>((len >> (8 * i)) & 0xFF);
  shortened += body;
  CHECK(decode_kind(shortened) == ProtocolError::Kind::kTruncated);
}

TEST_CASE("an unknown msg_type is rejected") {
  CHECK(decode_kind(unhex("010000007f")) == ProtocolError::Kind::kUnknownType);
  CHECK(decode_kind(unhex("0100000000")) == ProtocolError::Kind::kUnknownType);
}

TEST_CASE("trailing bytes are rejected") {
  CHECK(decode_kind(encode_frame(Bye{}) + "x") == ProtocolError::Kind::kTrailingBytes);
  // A BYE whose declared length includes a stray payload byte.
  CHECK(decode_kind(unhex("020000000400")) == ProtocolError::Kind::kTrailingBytes);
}

TEST_CASE("bad field values are rejected") {
  // done byte 2
  std::string s = encode_frame(sample_step());
  s[s.size() - 13] = 2;
  CHECK(decode_kind(s) == ProtocolError::Kind::kBadValue);
  // dtype code 9 in an ACTION array
  CHECK(decode_kind(unhex("0b0000000309000300000000000000")) == ProtocolError::Kind::kBadValue);
  // ACTION carrying a float
  CHECK(decode_kind(unhex("0700000003020000004040")) == ProtocolError::Kind::kBadValue);
  Step nan = sample_step();
  nan.output.reward = std::nanf("");
  CHECK(decode_kind(encode_frame(nan)) == ProtocolError::Kind::kBadValue);
}

TEST_CASE("a STEP that disagrees with the HELLO spec is rejected") {
  const std::string bytes = encode_frame(sample_step());
  const ObsSpec same{DType::kFloat32, {2, 2}};
  const ObsSpec other_dims{DType::kFloat32, {4}};
  const ObsSpec other_dtype{DType::kUInt8, {2, 2}};
  CHECK_NOTHROW(decode_frame(bytes, &same));
  CHECK(decode_kind(bytes, &other_dims) == ProtocolError::Kind::kSpecMismatch);
  CHECK(decode_kind(bytes, &other_dtype) == ProtocolError::Kind::kSpecMismatch);
}

TEST_CASE("frames above the size limit are refused") {
  CHECK(decode_kind(unhex("0000000504")) == ProtocolError::Kind::kOversize);
  Step big;
  big.output.observation = NDArray(DType::kFloat32, {static_cast<std::int64_t>(kMaxFrameBytes / 4)});
  try {
    encode_frame(big);
    FAIL("oversize frame encoded");
  } catch (const ProtocolError& e) {
    CHECK(e.kind() == ProtocolError::Kind::kOversize);
  }
}

TEST_CASE("float64 observations are not a wire dtype") {
  Step s;
  s.output.observation = NDArray(DType::kFloat64, {2});
  CHECK_THROWS_AS(encode_frame(s), ProtocolError);
}

TEST_CASE("frame channel carries frames over a socket") {
  auto [a, b] = socket_pair();
  FrameChannel ca(a), cb(b);
  std::thread writer([&] {
    ca.write(sample_step());
    ca.write(Action{2});
    a.shutdown_both();
  });
  const ObsSpec spec{DType::kFloat32, {2, 2}};
  auto m1 = cb.read(&spec);
  auto m2 = cb.read();
  auto m3 = cb.read();
  writer.join();
  REQUIRE(m1);
  CHECK(*m1 == Message(sample_step()));
  CHECK(std::get<Action>(*m2).action == 2);
  CHECK_FALSE(m3);
}

TEST_CASE("frame channel refuses an oversize length prefix before reading the body") {
  auto [a, b] = socket_pair();
  a.write_all(unhex("ffffffff02"));
  FrameChannel cb(b);
  CHECK_THROWS_AS(cb.read(), ProtocolError);
}

TEST_CASE("10k mutated frames decode or fail with a library error") {
  const auto r = protocheck::fuzz_decode(10000, 2024);
  INFO(r.first_foreign);
  CHECK(r.frames == 10000);
  CHECK(r.foreign_exceptions == 0);
  CHECK(r.decoded + r.rejected == 10000);
  CHECK(r.rejected > 0);
}
