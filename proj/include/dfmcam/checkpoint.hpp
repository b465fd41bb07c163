#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "dfmcam/network.hpp"
#include "dfmcam/voxelizer.hpp"

namespace dfmcam {

/// Everything besides the tensors that a later explain or eval needs.
struct CheckpointMeta {
  std::optional<GridSpec> grid;  // grid the training corpus was voxelized on
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_loss = 0.0;
};

struct Checkpoint {
  Network<float> network;
  CheckpointMeta meta;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Magic, version, JSON header (layer specs, input selection, metadata),
/// then per parameter the value, E[g^2] and E[dx^2] blobs, then batchnorm
/// buffers, all little-endian f32, closed by an FNV-1a trailer.
std::string encode_checkpoint(const Network<float>& net, const CheckpointMeta& meta);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dfmcam
