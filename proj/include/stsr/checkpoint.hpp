#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace stsr {

// Versioned binary checkpoint:
//
//   "STSRCKPT" | u32 version | u64 n | n bytes of JSON metadata
//   | u32 tensor count | per tensor: u32 name length, name, u32 dtype
//   (0 = f32, 1 = f64), u32 rank, i64 dims[rank], raw little-endian data
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters and buffers of `module`, names prefixed with `prefix.`.
void append_state(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix);
// Copies tensors named `prefix.<name>` into the module; every parameter must
// be present with a matching shape.
void restore_state(const Checkpoint& ckpt, torch::nn::Module& module, const std::string& prefix);

}  // namespace stsr
