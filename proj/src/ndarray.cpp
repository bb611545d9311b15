#include "beastpipe/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace beastpipe {

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kUInt8:
      return 1;
    case DType::kInt64:
    case DType::kFloat64:
      return 8;
    case DType::kFloat32:
      return 4;
  }
  throw DimensionError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kUInt8:
      return "uint8";
    case DType::kInt64:
      return "int64";
    case DType::kFloat32:
      return "float32";
    case DType::kFloat64:
      return "float64";
  }
  return "unknown";
}

std::int64_t num_elements(const Shape& dims) {
  std::int64_t n = 1;
  for (auto d : dims) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_str(dims));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ", ";
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::optional<std::size_t> bounded_nbytes(DType dtype, const Shape& dims, std::size_t limit) {
  for (auto d : dims) {
    if (d < 0) return std::nullopt;
  }
  if (std::find(dims.begin(), dims.end(), 0) != dims.end()) return 0;
  std::size_t total = dtype_size(dtype);
  for (auto d : dims) {
    if (total > limit / static_cast<std::size_t>(d)) return std::nullopt;
    total *= static_cast<std::size_t>(d);
  }
  if (total > limit) return std::nullopt;
  return total;
}

NDArray::NDArray(DType dtype, Shape dims)
    : dtype_(dtype), dims_(std::move(dims)), size_(num_elements(dims_)) {
  bytes_.resize(static_cast<std::size_t>(size_) * dtype_size(dtype_));
}

std::int64_t NDArray::dim(std::int64_t axis) const {
  if (axis < 0 || axis >= ndim()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(dims_));
  }
  return dims_[static_cast<std::size_t>(axis)];
}

double NDArray::get(std::int64_t flat) const {
  const std::byte* p = bytes_.data() + flat * static_cast<std::int64_t>(dtype_size(dtype_));
  switch (dtype_) {
    case DType::kUInt8:
      return static_cast<double>(*reinterpret_cast<const std::uint8_t*>(p));
    case DType::kInt64:
      return static_cast<double>(*reinterpret_cast<const std::int64_t*>(p));
    case DType::kFloat32:
      return *reinterpret_cast<const float*>(p);
    case DType::kFloat64:
      return *reinterpret_cast<const double*>(p);
  }
  return 0.0;
}

void NDArray::set(std::int64_t flat, double value) {
  std::byte* p = bytes_.data() + flat * static_cast<std::int64_t>(dtype_size(dtype_));
  switch (dtype_) {
    case DType::kUInt8:
      *reinterpret_cast<std::uint8_t*>(p) = static_cast<std::uint8_t>(value);
      break;
    case DType::kInt64:
      *reinterpret_cast<std::int64_t*>(p) = static_cast<std::int64_t>(value);
      break;
    case DType::kFloat32:
      *reinterpret_cast<float*>(p) = static_cast<float>(value);
      break;
    case DType::kFloat64:
      *reinterpret_cast<double*>(p) = value;
      break;
  }
}

NDArray NDArray::reshaped(Shape dims) const {
  if (num_elements(dims) != size_) {
    throw DimensionError("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
  }
  NDArray out = *this;
  out.dims_ = std::move(dims);
  return out;
}

NDArray NDArray::astype(DType dtype) const {
  if (dtype == dtype_) return *this;
  NDArray out(dtype, dims_);
  for (std::int64_t i = 0; i < size_; ++i) out.set(i, get(i));
  return out;
}

void NDArray::fill_zero() { std::fill(bytes_.begin(), bytes_.end(), std::byte{0}); }

namespace {

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisSplit split_at(const Shape& dims, std::int64_t axis) {
  AxisSplit s;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(dims.size()); ++i) {
    if (i < axis) s.outer *= dims[i];
    else if (i == axis) s.extent = dims[i];
    else s.inner *= dims[i];
  }
  return s;
}

}  // namespace

NDArray NDArray::slice(std::int64_t axis, std::int64_t start, std::int64_t length) const {
  const std::int64_t extent = dim(axis);
  if (start < 0 || length < 0 || start + length > extent) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range on axis " +
                         std::to_string(axis) + " of " + shape_str(dims_));
  }
  Shape out_dims = dims_;
  out_dims[static_cast<std::size_t>(axis)] = length;
  NDArray out(dtype_, out_dims);
  const auto s = split_at(dims_, axis);
  const std::size_t row = static_cast<std::size_t>(s.inner) * dtype_size(dtype_);
  for (std::int64_t o = 0; o < s.outer; ++o) {
    std::memcpy(out.bytes_.data() + o * length * row,
                bytes_.data() + (o * extent + start) * row, length * row);
  }
  return out;
}

bool NDArray::all_finite() const {
  switch (dtype_) {
    case DType::kFloat32:
      for (float v : values<float>())
        if (!std::isfinite(v)) return false;
      return true;
    case DType::kFloat64:
      for (double v : values<double>())
        if (!std::isfinite(v)) return false;
      return true;
    default:
      return true;
  }
}

NDArray concat(std::span<const NDArray> parts, std::int64_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero arrays");
  const NDArray& first = parts.front();
  first.dim(axis);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.dtype() != first.dtype() || p.ndim() != first.ndim()) {
      throw DimensionError("concat: dtype/rank mismatch, " + shape_str(first.dims()) +
                           " vs " + shape_str(p.dims()));
    }
    for (std::int64_t i = 0; i < first.ndim(); ++i) {
      if (i != axis && p.dims()[i] != first.dims()[i]) {
        throw DimensionError("concat: extent mismatch, " + shape_str(first.dims()) +
                             " vs " + shape_str(p.dims()));
      }
    }
    total += p.dim(axis);
  }
  Shape out_dims = first.dims();
  out_dims[static_cast<std::size_t>(axis)] = total;
  NDArray out(first.dtype(), out_dims);

  const auto s = split_at(out_dims, axis);
  const std::size_t elem = dtype_size(first.dtype());
  std::byte* dst = out.raw().data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (const auto& p : parts) {
      const std::size_t chunk = static_cast<std::size_t>(p.dim(axis) * s.inner) * elem;
      std::memcpy(dst, p.raw().data() + o * chunk, chunk);
      dst += chunk;
    }
  }
  return out;
}

NDArray stack(std::span<const NDArray> parts, std::int64_t axis) {
  if (parts.empty()) throw DimensionError("stack of zero arrays");
  std::vector<NDArray> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (axis < 0 || axis > p.ndim()) {
      throw DimensionError("stack axis " + std::to_string(axis) + " invalid for " +
                           shape_str(p.dims()));
    }
    Shape dims = p.dims();
    dims.insert(dims.begin() + axis, 1);
    expanded.push_back(p.reshaped(std::move(dims)));
  }
  return concat(expanded, axis);
}

void assign_at(NDArray& dst, std::int64_t axis, std::int64_t index, const NDArray& src) {
  Shape expect = dst.dims();
  if (index < 0 || index >= dst.dim(axis)) {
    throw DimensionError("assign_at index " + std::to_string(index) + " out of range");
  }
  expect.erase(expect.begin() + axis);
  if (src.dtype() != dst.dtype() || src.dims() != expect) {
    throw DimensionError("assign_at: expected " + std::string(dtype_name(dst.dtype())) +
                         shape_str(expect) + ", got " + dtype_name(src.dtype()) +
                         shape_str(src.dims()));
  }
  const auto s = split_at(dst.dims(), axis);
  const std::size_t chunk = static_cast<std::size_t>(s.inner) * dtype_size(dst.dtype());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    std::memcpy(dst.raw().data() + (o * s.extent + index) * chunk,
                src.raw().data() + o * chunk, chunk);
  }
}

}  // namespace beastpipe
