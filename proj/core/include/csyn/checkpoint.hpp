#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "csyn/tensor.hpp"

namespace csyn {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Binary container: magic `CSYN`, format version u32, tensor count u32, then
// per tensor: name length u16 + UTF-8 name, rank u8, dims as u32s, row-major
// little-endian f64 payload. Tensors are written in the given order, so the
// file bytes are a pure function of the parameter list.
void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params);
// Loads into the named parameters; every parameter must be present with a
// matching shape. A newer-versioned file fails loudly with both versions.
void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params);

struct TensorBlob {
  std::vector<int> shape;
  std::vector<double> data;
};

// Raw view of a checkpoint, for callers that reconstruct a model from the
// stored metadata before binding parameters.
std::map<std::string, TensorBlob> read_checkpoint(const std::string& path);

}  // namespace csyn
