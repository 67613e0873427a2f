#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsrep/simsiam.hpp"

namespace rsrep {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

/// Versioned model snapshot.
///
/// On-disk layout (all integers little-endian):
///   8 bytes   magic "RSREPCKP"
///   u32       format version
///   u64       header length L
///   L bytes   UTF-8 JSON header: specs, iteration, source dataset, tensor table
///   ...       raw float64 payload of every tensor, in table order
///   64 bytes  lowercase hex SHA-256 of everything above
struct Checkpoint {
  std::uint32_t format_version = kCheckpointFormatVersion;
  EncoderSpec encoder;
  PredictorSpec predictor;
  std::int64_t iteration = 0;
  std::string source_dataset;
  /// Parameters first, then batch-norm buffers, in module order.
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Verifies magic, version, and trailing hash.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

/// Writes the checkpoint and returns its content hash.
std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// The trailing content hash recorded in a checkpoint file.
std::string checkpoint_hash(const std::filesystem::path& path);
std::string checkpoint_hash(const Checkpoint& ckpt);

Checkpoint capture(SimSiamModel& model, std::int64_t iteration, const std::string& source_dataset);
/// Copies every tensor into the model; shapes and names must match exactly.
void restore(SimSiamModel& model, const Checkpoint& ckpt);

/// SHA-256 over the names and bit patterns of all parameters and buffers of
/// `m`. Used to prove a module was not modified.
std::string state_hash(Module& m);

}  // namespace rsrep
