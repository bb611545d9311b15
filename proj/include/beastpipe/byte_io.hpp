#ifndef BEASTPIPE_BYTE_IO_HPP_
#define BEASTPIPE_BYTE_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

namespace beastpipe {

static_assert(std::endian::native == std::endian::little,
              "wire and checkpoint formats assume a little-endian host");

// Append-only little-endian writer.
class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_bytes(std::span<const std::byte> bytes) {
    out_.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  void put_bytes(std::string_view bytes) { out_.append(bytes); }

  std::string& str() { return out_; }

 private:
  std::string out_;
};

// Bounds-checked reader; `Err` is thrown on underflow.
template <typename Err>
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) {
      throw Err("truncated: need " + std::to_string(n) + " bytes, have " +
                std::to_string(remaining()));
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_BYTE_IO_HPP_
