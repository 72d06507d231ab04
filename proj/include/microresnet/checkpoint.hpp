#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "microresnet/tensor.hpp"
#include "microresnet/train.hpp"

namespace microresnet {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// Binary layout (little-endian):
///   "MRNC", u32 version, u32 length + architecture text,
///   u32 count + tensor entries, u32 count + optimizer entries,
///   u64 epoch, u32 length + rng state text.
/// A tensor entry is u32 name length, name bytes, u8 rank, rank x u64 dims,
/// then the float32 payload.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string arch_text;
  std::vector<NamedTensor> tensors;
  std::vector<NamedTensor> optimizer;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Captures network, momentum buffers, normalization, epoch and rng.
Checkpoint make_checkpoint(const TrainingState& state);
/// Rebuilds the training state; throws ShapeError when the stored tensors do
/// not fit the stored architecture.
TrainingState restore_training(const Checkpoint& ckpt);

}  // namespace microresnet
