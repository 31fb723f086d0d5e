// Versioned binary checkpoint container.
//
// Layout (little-endian):
//   "VSCK"  u32 version (=1)
//   u64 metadata length, metadata bytes (free-form, JSON by convention)
//   u64 tensor count, then per tensor:
//     u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 values
//   u8 has_optimizer; if 1: u64 step, then for each tensor in order its
//     first-moment values followed by its second-moment values (f64)

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voicesep/diff/optimizer.h"
#include "voicesep/diff/tape.h"

namespace voicesep::diff {

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct CheckpointData {
  std::string metadata;
  std::vector<NamedTensor> tensors;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::vector<Matrix> first_moments;
  std::vector<Matrix> second_moments;
};

std::string encode_checkpoint(const std::string& metadata, const ParameterSet& params,
                              const AdamW* optimizer = nullptr);
/// Throws CheckpointError on a malformed container.
CheckpointData decode_checkpoint(const std::string& bytes);

/// Copies tensors into `params` (and state into `optimizer` when both are
/// present). Throws CheckpointError on any name or shape mismatch.
void restore_checkpoint(const CheckpointData& data, ParameterSet& params, AdamW* optimizer = nullptr);

void save_checkpoint(const std::filesystem::path& path, const std::string& metadata, const ParameterSet& params,
                     const AdamW* optimizer = nullptr);
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace voicesep::diff
