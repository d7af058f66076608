#pragma once

// Versioned binary container for model parameters, optimizer state and the
// configuration that produced them.
//
// Layout (little-endian): "DLSGCKPT", u32 version, string kind, string meta,
// u32 count, then per tensor: string name, u32 ndim, i64 dims[ndim], f32 data.
// Strings are u32 length + bytes. Output is byte-stable for equal contents.

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dlseg/kvconfig.hpp"

namespace dlseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  KvConfig meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  void add(const std::string& name, const torch::Tensor& t);
  bool has(const std::string& name) const;
  const torch::Tensor& get(const std::string& name) const;

  /// Every parameter and buffer of `module`, named `prefix` + qualified name.
  void add_module(const std::string& prefix, const torch::nn::Module& module);
  /// Copy stored values into `module`; missing names or shape mismatches are IoErrors.
  void load_module(const std::string& prefix, torch::nn::Module& module) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws IoError on a bad magic/version or when `expected_kind` is non-empty and differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = {});

}  // namespace dlseg
