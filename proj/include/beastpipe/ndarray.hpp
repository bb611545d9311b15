#ifndef BEASTPIPE_NDARRAY_HPP_
#define BEASTPIPE_NDARRAY_HPP_

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "beastpipe/errors.hpp"

namespace beastpipe {

// Codes double as the on-disk/on-wire dtype byte.
enum class DType : std::uint8_t {
  kUInt8 = 0,
  kInt64 = 1,
  kFloat32 = 2,
  kFloat64 = 3,
};

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return DType::kUInt8;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::kInt64;
  else if constexpr (std::is_same_v<T, float>) return DType::kFloat32;
  else if constexpr (std::is_same_v<T, double>) return DType::kFloat64;
  else static_assert(!sizeof(T), "unsupported element type");
}

using Shape = std::vector<std::int64_t>;

std::int64_t num_elements(const Shape& dims);
std::string shape_str(const Shape& dims);

// Byte size of an array of this shape, or nullopt if it would exceed
// `limit` (also guards against overflow on untrusted dims).
std::optional<std::size_t> bounded_nbytes(DType dtype, const Shape& dims, std::size_t limit);

// Dense row-major array with a fixed element type. Storage is owned and
// contiguous; copies are deep.
class NDArray {
 public:
  NDArray() : NDArray(DType::kFloat32, Shape{0}) {}
  NDArray(DType dtype, Shape dims);

  template <typename T>
  static NDArray from(Shape dims, std::initializer_list<T> values) {
    return from<T>(std::move(dims), std::span<const T>(values.begin(), values.size()));
  }
  template <typename T>
  static NDArray from(Shape dims, std::span<const T> values) {
    NDArray out(dtype_of<T>(), std::move(dims));
    if (static_cast<std::int64_t>(values.size()) != out.size()) {
      throw DimensionError("value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(out.dims()));
    }
    std::memcpy(out.bytes_.data(), values.data(), out.nbytes());
    return out;
  }
  template <typename T>
  static NDArray scalar(T value) {
    return from<T>(Shape{}, {value});
  }

  DType dtype() const { return dtype_; }
  const Shape& dims() const { return dims_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(dims_.size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t size() const { return size_; }
  std::size_t nbytes() const { return bytes_.size(); }

  std::span<std::byte> raw() { return bytes_; }
  std::span<const std::byte> raw() const { return bytes_; }

  template <typename T>
  std::span<T> values() {
    check_type<T>();
    return {reinterpret_cast<T*>(bytes_.data()), static_cast<std::size_t>(size_)};
  }
  template <typename T>
  std::span<const T> values() const {
    check_type<T>();
    return {reinterpret_cast<const T*>(bytes_.data()), static_cast<std::size_t>(size_)};
  }

  // Element at a flat row-major offset, converted to double.
  double get(std::int64_t flat) const;
  void set(std::int64_t flat, double value);

  NDArray reshaped(Shape dims) const;
  NDArray astype(DType dtype) const;
  void fill_zero();

  // Sub-range [start, start + length) along `axis`.
  NDArray slice(std::int64_t axis, std::int64_t start, std::int64_t length) const;

  bool all_finite() const;

  friend bool operator==(const NDArray& a, const NDArray& b) {
    return a.dtype_ == b.dtype_ && a.dims_ == b.dims_ && a.bytes_ == b.bytes_;
  }

 private:
  template <typename T>
  void check_type() const {
    if (dtype_of<T>() != dtype_) {
      throw DimensionError(std::string("dtype is ") + dtype_name(dtype_) +
                           ", requested " + dtype_name(dtype_of<T>()));
    }
  }

  DType dtype_;
  Shape dims_;
  std::int64_t size_ = 0;
  std::vector<std::byte> bytes_;
};

// Concatenates along an existing axis; all other extents and the dtype
// must agree.
NDArray concat(std::span<const NDArray> parts, std::int64_t axis);

// Stacks equally shaped arrays along a new axis inserted at `axis`.
NDArray stack(std::span<const NDArray> parts, std::int64_t axis);

// Copies `src` into `dst` at index `index` of `axis`; src has dst's shape
// with that axis removed.
void assign_at(NDArray& dst, std::int64_t axis, std::int64_t index, const NDArray& src);

// Calls f(T{}) with T the floating element type of `dtype`.
template <typename F>
decltype(auto) visit_floating(DType dtype, F&& f) {
  switch (dtype) {
    case DType::kFloat32:
      return f(float{});
    case DType::kFloat64:
      return f(double{});
    default:
      throw DimensionError(std::string("expected a floating dtype, got ") +
                           dtype_name(dtype));
  }
}

}  // namespace beastpipe

#endif  // BEASTPIPE_NDARRAY_HPP_
