#pragma once

// Parameter checkpoints: 8-byte magic, u64 header length, a JSON header with
// tensor names, shapes and byte offsets, then little-endian tensor data.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "eurnet/layers.hpp"

namespace eurnet {

using CheckpointMeta = std::map<std::string, std::string>;

template <typename T>
void save_checkpoint(std::ostream& out, const ParamList<T>& params, const CheckpointMeta& meta = {});
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamList<T>& params, const CheckpointMeta& meta = {});

/// Overwrites the values of `params` in place. Every parameter must be present
/// with the same shape; a stored width other than T is converted. Returns the
/// stored metadata.
template <typename T>
CheckpointMeta load_checkpoint(std::istream& in, const ParamList<T>& params);
template <typename T>
CheckpointMeta load_checkpoint(const std::filesystem::path& path, const ParamList<T>& params);

/// Metadata and stored width ("f32" or "f64") without touching tensor data.
struct CheckpointInfo {
  std::string dtype;
  CheckpointMeta meta;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

}  // namespace eurnet
