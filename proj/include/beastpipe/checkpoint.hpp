#ifndef BEASTPIPE_CHECKPOINT_HPP_
#define BEASTPIPE_CHECKPOINT_HPP_

#include <filesystem>
#include <optional>
#include <string>

#include "beastpipe/model.hpp"

namespace beastpipe {

// Layout (all integers little-endian):
//   "TBST1"
//   per tensor: u32 name_len, name, u8 dtype, u8 ndim, u32 dims..., raw data
//   u64 version
std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);

// With `expected`, every tensor must match its dtype and dims; the error
// names the offending field.
ModelParams load_checkpoint(const std::filesystem::path& path,
                            const std::optional<ParamTensors>& expected = std::nullopt);

}  // namespace beastpipe

#endif  // BEASTPIPE_CHECKPOINT_HPP_
