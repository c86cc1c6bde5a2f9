#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpcnn/network.hpp"
#include "mpcnn/training.hpp"

namespace mpcnn {

// Binary layout, all integers little-endian:
//   "MPCN" | u32 version | u32 header length | header JSON (UTF-8)
//   then per tensor: u32 name length | name | u32 rank | rank x u32 dims | f32 data
// The header holds the architecture, training config and state, and the
// metrics history. Tensors are the parameters (by name), optimizer velocity
// ("velocity/<name>") and the mean images ("mean/source", "mean/bilateral").

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkSpec spec;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::vector<Tensor> velocity;  // empty until the optimizer has taken a step
  TrainConfig config;
  TrainState state;
  std::optional<MeanImage> source_mean;
  std::optional<MeanImage> bilateral_mean;
};

/// Weights only (no optimizer or training state).
Checkpoint make_checkpoint(const Network<float>& net);
Checkpoint make_checkpoint(const Trainer& trainer);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: writes a temporary file next to `path` and renames it, so an
/// existing checkpoint survives a failed write.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies the weights into `net`; fails with architecture-mismatch unless the
/// specs are identical.
void restore_network(Network<float>& net, const Checkpoint& ckpt);
Network<float> network_from_checkpoint(const Checkpoint& ckpt);
/// Restores epoch/batch counters, scheduler, metrics and optimizer velocity.
/// The trainer's network must already hold the checkpoint's weights.
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);
/// The means stored in the checkpoint; fails if the source mean is absent.
DatasetMeans checkpoint_means(const Checkpoint& ckpt);

}  // namespace mpcnn
