#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lambert/tensor.hpp"

namespace lambert::nn {

struct NamedTensor {
  std::string name;
  Tensor<float>* tensor;
};

struct ManifestEntry {
  std::string name;
  std::vector<int> shape;
  uint64_t offset;  // byte offset into the blob
};

// Checkpoint = text manifest at `path` (one line per tensor: name, shape,
// byte offset) plus a binary blob at `path + ".bin"` of little-endian 32-bit
// floats in row-major order. Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);

// Loads values into the given pre-shaped tensors; throws if a name is missing
// from the file or a shape disagrees.
void load_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);

std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace lambert::nn
