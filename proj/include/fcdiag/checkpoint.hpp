#pragma once

#include <string>
#include <vector>

#include "fcdiag/tensor.hpp"

namespace fcdiag {

// Flat binary parameter checkpoint: magic "DACW", u32 tensor count, then per
// tensor u32 rank, u32 dims[rank], and the 64-bit reals. Little-endian.
void save_checkpoint(const std::string& path,
                     const std::vector<Tensor>& tensors);

// Loads into existing tensors; shapes must match the file exactly.
void load_checkpoint(const std::string& path, std::vector<Tensor>& tensors);

// Reads a checkpoint without a target parameter list.
std::vector<Tensor> read_checkpoint(const std::string& path);

}  // namespace fcdiag
