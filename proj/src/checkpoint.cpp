#include "beastpipe/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "beastpipe/byte_io.hpp"

namespace beastpipe {

namespace {

constexpr std::string_view kMagic = "TBST1";

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  params.check_shapes();
  ByteWriter w;
  w.put_bytes(kMagic);
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto name = ParamTensors::kNames[i];
    const NDArray& t = *tensors[i];
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.ndim()));
    for (auto d : t.dims()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_bytes(t.raw());
  }
  w.put<std::uint64_t>(static_cast<std::uint64_t>(params.version));
  return std::move(w.str());
}

ModelParams decode_checkpoint(std::string_view bytes) {
  ByteReader<CheckpointError> r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw CheckpointError("bad magic, not a TBST1 file");
  ModelParams p;
  auto slots = p.tensors();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const auto name = r.take(name_len);
    if (name != ParamTensors::kNames[i]) {
      throw CheckpointError("expected tensor " + std::string(ParamTensors::kNames[i]) +
                            ", found '" + std::string(name) + "'");
    }
    const auto code = r.get<std::uint8_t>();
    if (code > static_cast<std::uint8_t>(DType::kFloat64)) {
      throw CheckpointError(std::string(name) + ": unknown dtype code " + std::to_string(code));
    }
    const auto ndim = r.get<std::uint8_t>();
    Shape dims;
    for (int k = 0; k < ndim; ++k) dims.push_back(r.get<std::uint32_t>());
    if (!bounded_nbytes(static_cast<DType>(code), dims, r.remaining())) {
      throw CheckpointError(std::string(name) + ": data for " + shape_str(dims) +
                            " exceeds file size");
    }
    NDArray t(static_cast<DType>(code), dims);
    const auto data = r.take(t.nbytes());
    std::memcpy(t.raw().data(), data.data(), data.size());
    *slots[i] = std::move(t);
  }
  p.version = static_cast<std::int64_t>(r.get<std::uint64_t>());
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after version");
  try {
    p.check_shapes();
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("inconsistent tensors: ") + e.what());
  }
  return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(params);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path,
                            const std::optional<ParamTensors>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ModelParams p = decode_checkpoint(ss.str());
  if (expected) {
    const auto have = p.tensors();
    const auto want = expected->tensors();
    for (std::size_t i = 0; i < have.size(); ++i) {
      if (have[i]->dims() != want[i]->dims() || have[i]->dtype() != want[i]->dtype()) {
        throw CheckpointError(std::string(ParamTensors::kNames[i]) + ": checkpoint has " +
                              dtype_name(have[i]->dtype()) + shape_str(have[i]->dims()) +
                              ", configuration expects " + dtype_name(want[i]->dtype()) +
                              shape_str(want[i]->dims()));
      }
    }
  }
  return p;
}

}  // namespace beastpipe
